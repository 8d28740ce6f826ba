#include "hrg/dataset.hpp"

#include "hrg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hrg {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

std::ifstream open_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

std::vector<fs::path> sorted_files(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("dataset root " + root.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

}  // namespace

Channels parse_channels(const std::string& s) {
  if (s == "d") return Channels::d;
  if (s == "rgb") return Channels::rgb;
  if (s == "rgbd") return Channels::rgbd;
  throw std::invalid_argument("channels must be d, rgb or rgbd, got '" + s + "'");
}

std::string to_string(Channels c) {
  switch (c) {
    case Channels::d: return "d";
    case Channels::rgb: return "rgb";
    case Channels::rgbd: return "rgbd";
  }
  return "?";
}

Index channel_count(Channels c) { return c == Channels::d ? 1 : c == Channels::rgb ? 3 : 4; }

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "cornell") return DatasetKind::cornell;
  if (s == "jacquard") return DatasetKind::jacquard;
  if (s == "synthetic") return DatasetKind::synthetic;
  throw std::invalid_argument("dataset kind must be cornell, jacquard or synthetic, got '" + s + "'");
}

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::cornell: return "cornell";
    case DatasetKind::jacquard: return "jacquard";
    case DatasetKind::synthetic: return "synthetic";
  }
  return "?";
}

SplitMode parse_split_mode(const std::string& s) {
  if (s == "iw" || s == "IW") return SplitMode::iw;
  if (s == "ow" || s == "OW") return SplitMode::ow;
  throw std::invalid_argument("split mode must be iw or ow, got '" + s + "'");
}

std::string to_string(SplitMode m) { return m == SplitMode::iw ? "iw" : "ow"; }

MapF read_cornell_cloud(const fs::path& path, Index rows, Index cols) {
  auto in = open_text(path);
  MapF depth = MapF::Zero(rows, cols);
  std::string line;
  bool data = false;
  while (std::getline(in, line)) {
    if (!data) {
      if (line.rfind("DATA", 0) == 0) data = true;
      continue;
    }
    std::istringstream ls(line);
    double x, y, z, rgb;
    long long index;
    if (!(ls >> x >> y >> z >> rgb >> index)) continue;
    if (index < 0 || index >= rows * cols) continue;
    depth(index / cols, index % cols) = static_cast<float>(std::sqrt(x * x + y * y + z * z) / 1000.0);
  }
  if (!data) throw std::runtime_error("point cloud " + path.string() + " has no DATA header");
  return depth;
}

Sample load_images(const Sample& sample) {
  Sample s = sample;
  if (s.rgb.empty() && !s.rgb_path.empty()) s.rgb = read_rgb(s.rgb_path);
  if (s.depth.size() == 0 && !s.depth_path.empty()) {
    s.depth = s.depth_path.extension() == ".txt" ? read_cornell_cloud(s.depth_path) : read_depth(s.depth_path);
  }
  if (!s.rgb.empty() && s.depth.size() > 0 && (s.rgb.rows != s.depth.rows() || s.rgb.cols != s.depth.cols())) {
    throw std::runtime_error("sample " + s.source + ": rgb is " + std::to_string(s.rgb.rows) + "x" +
                             std::to_string(s.rgb.cols) + " but depth is " + std::to_string(s.depth.rows()) + "x" +
                             std::to_string(s.depth.cols()));
  }
  return s;
}

std::vector<GraspRectangle> parse_cornell_rects(const fs::path& path, std::vector<std::string>& warnings) {
  auto in = open_text(path);
  std::vector<std::array<double, 2>> vertices;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string xs, ys;
    if (!(ls >> xs >> ys)) throw std::runtime_error(path.string() + ": malformed vertex line '" + line + "'");
    vertices.push_back({std::stod(xs), std::stod(ys)});
  }
  if (vertices.size() % 4 != 0) {
    warnings.push_back(path.string() + ": " + std::to_string(vertices.size()) +
                       " vertex lines is not a multiple of 4; trailing lines ignored");
  }
  std::vector<GraspRectangle> rects;
  for (std::size_t k = 0; k + 4 <= vertices.size(); k += 4) {
    bool finite = true;
    for (std::size_t i = k; i < k + 4; ++i) finite = finite && std::isfinite(vertices[i][0]) && std::isfinite(vertices[i][1]);
    if (!finite) {
      warnings.push_back(path.string() + ": rectangle " + std::to_string(k / 4) + " has a NaN vertex; dropped");
      continue;
    }
    GraspRectangle g;
    for (std::size_t i = k; i < k + 4; ++i) {
      g.x += vertices[i][0] / 4;
      g.y += vertices[i][1] / 4;
    }
    const double dx = vertices[k + 1][0] - vertices[k][0];
    const double dy = vertices[k + 1][1] - vertices[k][1];
    g.theta = normalize_angle(std::atan2(dy, dx));
    g.width = std::hypot(dx, dy);
    g.quality = 1.0;
    rects.push_back(g);
  }
  return rects;
}

std::vector<GraspRectangle> parse_jacquard_grasps(const fs::path& path, std::vector<std::string>& warnings) {
  auto in = open_text(path);
  std::vector<GraspRectangle> rects;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ls(line);
    std::string field;
    bool ok = true;
    while (std::getline(ls, field, ';')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(field, &used));
        ok = ok && trim(field.substr(used)).empty();
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok || v.size() != 5 || !std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
      warnings.push_back(path.string() + ":" + std::to_string(number) + ": malformed grasp line dropped");
      continue;
    }
    GraspRectangle g;
    g.x = v[0];
    g.y = v[1];
    g.theta = normalize_angle(-v[2] * kPi / 180.0);
    g.width = v[3];
    g.quality = 1.0;
    rects.push_back(g);
  }
  return rects;
}

Dataset parse_cornell(const fs::path& root) {
  Dataset ds;
  ds.kind = DatasetKind::cornell;
  const auto files = sorted_files(root);

  std::map<std::string, std::string> objects;
  for (const auto& f : files) {
    if (f.filename() != "z.txt") continue;
    auto in = open_text(f);
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string image, object;
      if (ls >> image >> object) objects[image] = object;
    }
  }

  const std::regex color(R"(pcd(\d{4})r\.png)");
  std::smatch m;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    if (!std::regex_match(name, m, color)) continue;
    const std::string number = m[1];
    const fs::path dir = f.parent_path();
    const fs::path cpos = dir / ("pcd" + number + "cpos.txt");
    if (!fs::exists(cpos)) {
      ds.warnings.push_back(f.string() + ": no rectangle file " + cpos.filename().string() + "; sample skipped");
      continue;
    }
    Sample s;
    s.source = f.string();
    s.rgb_path = f;
    if (fs::exists(dir / ("pcd" + number + "d.tiff"))) s.depth_path = dir / ("pcd" + number + "d.tiff");
    else if (fs::exists(dir / ("pcd" + number + ".txt"))) s.depth_path = dir / ("pcd" + number + ".txt");
    s.rects = parse_cornell_rects(cpos, ds.warnings);
    const auto it = objects.find(std::to_string(std::stoi(number)));
    s.object_id = it != objects.end() ? it->second : number;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset parse_jacquard(const fs::path& root) {
  Dataset ds;
  ds.kind = DatasetKind::jacquard;
  const std::string suffix = "_grasps.txt";
  for (const auto& f : sorted_files(root)) {
    const std::string name = f.filename().string();
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    const std::string stem = name.substr(0, name.size() - suffix.size());
    Sample s;
    s.source = f.string();
    s.object_id = f.parent_path().filename().string();
    s.rects = parse_jacquard_grasps(f, ds.warnings);
    if (s.rects.empty()) ds.warnings.push_back(f.string() + ": no grasps; sample unusable for training");
    const fs::path rgb = f.parent_path() / (stem + "_RGB.png");
    const fs::path depth = f.parent_path() / (stem + "_perfect_depth.tiff");
    if (fs::exists(rgb)) s.rgb_path = rgb;
    if (fs::exists(depth)) s.depth_path = depth;
    if (!s.has_rgb() && !s.has_depth()) {
      ds.warnings.push_back(f.string() + ": no RGB or depth image; sample skipped");
      continue;
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset make_synthetic(int count, std::uint64_t seed, const SyntheticOptions& options) {
  if (count < 0) throw std::invalid_argument("make_synthetic: negative count");
  Dataset ds;
  ds.kind = DatasetKind::synthetic;
  const Camera cam{options.image_size, static_cast<double>(options.image_size)};
  const Viewpoint view{0.0, 0.0, options.camera_height};
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    SceneSpec spec;
    spec.count = std::uniform_int_distribution<int>(1, std::max(1, options.max_objects))(rng);
    spec.adjacency = 2;
    spec.center_jitter = 0.15 * options.camera_height;
    spec.seed = rng();
    const Scene scene = make_scene(spec);
    Sample s;
    s.depth = render_depth(scene, view, cam) / 1000.0f;
    s.rgb = render_rgb(scene, view, cam);
    s.object_id = "synthetic" + std::to_string(i);
    s.source = "synthetic:" + std::to_string(seed) + ":" + std::to_string(i);
    const double limit = static_cast<double>(options.image_size - 1);
    for (const auto& o : scene.objects) {
      for (const auto& g : object_grasps(o)) {
        const GraspRectangle p = grasp_to_pixels(g, view, cam);
        const Polygon poly = rect_polygon(p);
        const bool inside = std::all_of(poly.begin(), poly.end(), [&](const Point2& v) {
          return v.x() >= 0 && v.x() <= limit && v.y() >= 0 && v.y() <= limit;
        });
        if (inside) s.rects.push_back(p);
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<Fold> split(const Dataset& dataset, SplitMode mode, int folds, std::uint64_t seed) {
  const std::size_t n = dataset.samples.size();
  if (folds < 2) throw std::invalid_argument("split: need at least 2 folds");
  if (n < static_cast<std::size_t>(folds)) {
    throw std::invalid_argument("split: " + std::to_string(n) + " samples cannot fill " + std::to_string(folds) + " folds");
  }
  std::mt19937_64 rng(seed);
  std::vector<int> fold_of(n, 0);
  if (mode == SplitMode::iw) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = static_cast<int>(i * folds / n);
  } else {
    std::set<std::string> unique;
    for (const auto& s : dataset.samples) {
      if (s.object_id.empty()) throw std::invalid_argument("split: OW mode needs object ids (" + s.source + ")");
      unique.insert(s.object_id);
    }
    std::vector<std::string> ids(unique.begin(), unique.end());
    if (ids.size() < static_cast<std::size_t>(folds)) {
      throw std::invalid_argument("split: " + std::to_string(ids.size()) + " distinct objects cannot fill " +
                                  std::to_string(folds) + " folds");
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    std::map<std::string, int> id_fold;
    for (std::size_t i = 0; i < ids.size(); ++i) id_fold[ids[i]] = static_cast<int>(i * folds / ids.size());
    for (std::size_t i = 0; i < n; ++i) fold_of[i] = id_fold[dataset.samples[i].object_id];
  }
  std::vector<Fold> out(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < n; ++i) {
    for (int f = 0; f < folds; ++f) (fold_of[i] == f ? out[f].test : out[f].train).push_back(i);
  }
  return out;
}

void write_manifest(const fs::path& path, const Dataset& dataset, SplitMode mode, std::uint64_t seed,
                    const std::vector<Fold>& folds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  const auto join = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  out << "dataset=" << to_string(dataset.kind) << "\n";
  out << "samples=" << dataset.samples.size() << "\n";
  out << "split=" << to_string(mode) << "\n";
  out << "folds=" << folds.size() << "\n";
  out << "seed=" << seed << "\n";
  for (std::size_t f = 0; f < folds.size(); ++f) out << "fold" << f << ".test=" << join(folds[f].test) << "\n";
}

Point2 CropTransform::to_output(const Point2& p) const {
  const double a = quarter_turns * kPi / 2;
  const Point2 d = (p - center) / scale;
  const double half = static_cast<double>(size) / 2;
  return {std::cos(a) * d.x() - std::sin(a) * d.y() + half, std::sin(a) * d.x() + std::cos(a) * d.y() + half};
}

Point2 CropTransform::to_source(const Point2& q) const {
  const double a = -quarter_turns * kPi / 2;
  const double half = static_cast<double>(size) / 2;
  const Point2 d = (q - Point2(half, half)) * scale;
  return center + Point2(std::cos(a) * d.x() - std::sin(a) * d.y(), std::sin(a) * d.x() + std::cos(a) * d.y());
}

GraspRectangle CropTransform::apply(const GraspRectangle& g) const {
  GraspRectangle out = g;
  const Point2 c = to_output(Point2(g.x, g.y));
  out.x = c.x();
  out.y = c.y();
  out.theta = normalize_angle(g.theta + quarter_turns * kPi / 2);
  out.width = g.width / scale;
  return out;
}

MapF resample(const MapF& src, const CropTransform& t, bool nearest) {
  MapF out(t.size, t.size);
  const Index rows = src.rows(), cols = src.cols();
  for (Index r = 0; r < t.size; ++r) {
    for (Index c = 0; c < t.size; ++c) {
      Point2 p = t.to_source(Point2(static_cast<double>(c), static_cast<double>(r)));
      // Quarter turns of an integer grid land on integers; snap rounding noise.
      if (std::abs(p.x() - std::round(p.x())) < 1e-9) p.x() = std::round(p.x());
      if (std::abs(p.y() - std::round(p.y())) < 1e-9) p.y() = std::round(p.y());
      if (nearest) {
        out(r, c) = src(std::clamp<Index>(std::lround(p.y()), 0, rows - 1), std::clamp<Index>(std::lround(p.x()), 0, cols - 1));
        continue;
      }
      const double x = std::clamp(p.x(), 0.0, static_cast<double>(cols - 1));
      const double y = std::clamp(p.y(), 0.0, static_cast<double>(rows - 1));
      const Index x0 = static_cast<Index>(std::floor(x)), y0 = static_cast<Index>(std::floor(y));
      const Index x1 = std::min(x0 + 1, cols - 1), y1 = std::min(y0 + 1, rows - 1);
      const double fx = x - x0, fy = y - y0;
      out(r, c) = static_cast<float>((1 - fy) * ((1 - fx) * src(y0, x0) + fx * src(y0, x1)) +
                                     fy * ((1 - fx) * src(y1, x0) + fx * src(y1, x1)));
    }
  }
  return out;
}

MapF inpaint_nearest(const MapF& depth) {
  MapF out = depth;
  const Index rows = depth.rows(), cols = depth.cols();
  std::vector<char> valid(static_cast<std::size_t>(depth.size()), 0);
  std::deque<Index> queue;
  for (Index i = 0; i < depth.size(); ++i) {
    const float v = depth.data()[i];
    if (std::isfinite(v) && v != 0.0f) {
      valid[static_cast<std::size_t>(i)] = 1;
      queue.push_back(i);
    }
  }
  if (queue.empty()) return MapF::Zero(rows, cols);
  while (!queue.empty()) {
    const Index i = queue.front();
    queue.pop_front();
    const Index r = i / cols, c = i % cols;
    const Index nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
    for (const auto& nb : nbr) {
      if (nb[0] < 0 || nb[0] >= rows || nb[1] < 0 || nb[1] >= cols) continue;
      const Index j = nb[0] * cols + nb[1];
      if (valid[static_cast<std::size_t>(j)]) continue;
      valid[static_cast<std::size_t>(j)] = 1;
      out.data()[j] = out.data()[i];
      queue.push_back(j);
    }
  }
  return out;
}

namespace {

MapF rgb_channel(const RgbImage& img, int k) {
  MapF m(img.rows, img.cols);
  for (Index r = 0; r < img.rows; ++r) {
    for (Index c = 0; c < img.cols; ++c) m(r, c) = img.at(r, c, k);
  }
  return m;
}

std::vector<GraspRectangle> visible(const std::vector<GraspRectangle>& rects, const CropTransform& t) {
  std::vector<GraspRectangle> out;
  const double limit = static_cast<double>(t.size - 1);
  for (const auto& g : rects) {
    const GraspRectangle o = t.apply(g);
    if (o.x >= 0 && o.x <= limit && o.y >= 0 && o.y <= limit) out.push_back(o);
  }
  return out;
}

}  // namespace

Prepared preprocess(const Sample& raw, const PreprocessOptions& opt, std::uint64_t seed) {
  const bool need_depth = opt.channels != Channels::rgb;
  const bool need_rgb = opt.channels != Channels::d;
  if (need_depth && !raw.has_depth()) throw std::invalid_argument("preprocess: " + raw.source + " has no depth image");
  if (need_rgb && !raw.has_rgb()) throw std::invalid_argument("preprocess: " + raw.source + " has no RGB image");
  const Sample s = load_images(raw);
  const Index rows = s.depth.size() > 0 ? s.depth.rows() : s.rgb.rows;
  const Index cols = s.depth.size() > 0 ? s.depth.cols() : s.rgb.cols;
  const Index shorter = std::min(rows, cols);
  Index window = opt.window > 0 ? opt.window : (shorter > 480 ? shorter : std::min<Index>(224, shorter));

  CropTransform t;
  t.size = opt.size;
  t.center = Point2(static_cast<double>(cols) / 2, static_cast<double>(rows) / 2);
  t.scale = static_cast<double>(window) / static_cast<double>(opt.size);
  std::vector<GraspRectangle> rects = visible(s.rects, t);

  if (opt.augment) {
    std::mt19937_64 rng(seed);
    for (int attempt = 0; attempt < opt.max_tries; ++attempt) {
      CropTransform a = t;
      a.quarter_turns = std::uniform_int_distribution<int>(0, 3)(rng);
      const double zoom = std::uniform_real_distribution<double>(opt.min_zoom, 1.0)(rng);
      a.scale = window * zoom / static_cast<double>(opt.size);
      const double shift = opt.max_shift * static_cast<double>(window);
      std::uniform_real_distribution<double> offset(-shift, shift);
      const double dx = offset(rng), dy = offset(rng);
      a.center = Point2(std::clamp(t.center.x() + dx, 0.0, static_cast<double>(cols)),
                        std::clamp(t.center.y() + dy, 0.0, static_cast<double>(rows)));
      auto kept = visible(s.rects, a);
      if (!kept.empty()) {
        t = a;
        rects = std::move(kept);
        break;
      }
    }
  }

  std::vector<MapF> planes;
  if (need_depth) {
    MapF d = resample(inpaint_nearest(s.depth), t);
    const double mean = d.cast<double>().mean();
    const double var = (d.cast<double>() - mean).square().mean();
    const double stdev = std::sqrt(var);
    d = ((d.cast<double>() - mean) / (stdev > 1e-6 ? stdev : 1.0)).cast<float>();
    planes.push_back(std::move(d));
  }
  if (need_rgb) {
    for (int k = 0; k < 3; ++k) planes.push_back(resample(rgb_channel(s.rgb, k), t) / 127.5f - 1.0f);
  }

  Prepared p;
  p.input = Tensorf(Shape{1, static_cast<Index>(planes.size()), opt.size, opt.size});
  for (std::size_t k = 0; k < planes.size(); ++k) p.input.channel(0, static_cast<Index>(k)) = planes[k].matrix();
  p.target = encode_labels(rects, opt.size, opt.size);
  p.rects = std::move(rects);
  p.transform = t;
  return p;
}

}  // namespace hrg
