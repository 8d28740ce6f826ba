#include "hrg/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>

namespace hrg {

namespace {

constexpr double kPi = std::numbers::pi;

/// Paints pixel-space grasps whose centers are in view over a constant floor.
GraspMaps paint(const std::vector<GraspRectangle>& grasps, Index size) {
  const double limit = static_cast<double>(size - 1);
  std::vector<GraspRectangle> in_view;
  for (const auto& g : grasps) {
    if (g.x >= 0 && g.x <= limit && g.y >= 0 && g.y <= limit) in_view.push_back(g);
  }
  GraspMaps m = encode_labels(in_view, size, size);
  m.quality = m.quality.max(kOracleFloor);
  return m;
}

double point_polygon_distance(const Polygon& p, const Point2& q) {
  if (contains(p, q)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) best = std::min(best, segment_distance(q, p[i], p[(i + 1) % p.size()]));
  return best;
}

/// Closest pair of points between two disjoint convex polygons.
std::pair<Point2, Point2> closest_points(const Polygon& a, const Polygon& b) {
  double best = std::numeric_limits<double>::infinity();
  std::pair<Point2, Point2> out{a[0], b[0]};
  const auto project = [](const Point2& p, const Point2& s0, const Point2& s1) {
    const Point2 d = s1 - s0;
    const double t = std::clamp((p - s0).dot(d) / std::max(d.squaredNorm(), 1e-300), 0.0, 1.0);
    return Point2(s0 + t * d);
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const Point2 pb = project(a[i], b[j], b[(j + 1) % b.size()]);
      if ((pb - a[i]).norm() < best) {
        best = (pb - a[i]).norm();
        out = {a[i], pb};
      }
      const Point2 pa = project(b[j], a[i], a[(i + 1) % a.size()]);
      if ((pa - b[j]).norm() < best) {
        best = (pa - b[j]).norm();
        out = {pa, b[j]};
      }
    }
  }
  return out;
}

}  // namespace

GraspMaps SceneOracle::infer(const View& view) {
  if (!view.scene) throw std::invalid_argument("scene-oracle: view carries no scene");
  // Only grasps that would succeed are labelled.
  std::vector<GraspRectangle> grasps;
  for (const auto& o : view.scene->objects) {
    for (const auto& g : object_grasps(o)) {
      if (judge_grasp(*view.scene, g).success) grasps.push_back(grasp_to_pixels(g, view.viewpoint, view.camera));
    }
  }
  return paint(grasps, view.camera.size);
}

GraspMaps CorruptedOracle::infer(const View& view) {
  if (!view.scene || view.scene->objects.size() < 2) {
    throw std::invalid_argument("corrupted-oracle: needs a scene with at least two objects");
  }
  const auto [p, q] = closest_points(view.scene->objects[0].footprint, view.scene->objects[1].footprint);
  GraspRectangle g;
  const Point2 mid = 0.5 * (p + q);
  g.x = mid.x();
  g.y = mid.y();
  g.theta = normalize_angle(std::atan2(q.y() - p.y(), q.x() - p.x()));
  g.width = width_;
  return paint({grasp_to_pixels(g, view.viewpoint, view.camera)}, view.camera.size);
}

GraspMaps GeometricModel::infer(const View& view) {
  const MapF& d = view.depth;
  const Index rows = d.rows(), cols = d.cols();
  const float table = d.maxCoeff();
  const double mm_px = table / view.camera.focal;

  // Object mask, then closing (dilate, erode) with a square structuring element.
  using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Mask mask = (d < table - static_cast<float>(min_height_)).cast<std::uint8_t>();
  // Square structuring element, applied as a row pass and a column pass.
  const auto morph = [&](const Mask& in, bool dilate) {
    const int r = merge_radius_;
    const auto pass = [&](const Mask& src, bool along_rows) {
      Mask out(rows, cols);
      for (Index y = 0; y < rows; ++y) {
        for (Index x = 0; x < cols; ++x) {
          std::uint8_t v = dilate ? 0 : 1;
          for (Index k = -r; k <= r; ++k) {
            const std::uint8_t s = along_rows ? src(y, std::clamp<Index>(x + k, 0, cols - 1))
                                              : src(std::clamp<Index>(y + k, 0, rows - 1), x);
            v = dilate ? std::max(v, s) : std::min(v, s);
          }
          out(y, x) = v;
        }
      }
      return out;
    };
    return pass(pass(in, true), false);
  };
  if (merge_radius_ > 0) mask = morph(morph(mask, true), false);

  std::vector<int> label(static_cast<std::size_t>(rows * cols), -1);
  std::vector<std::vector<Index>> blobs;
  for (Index i = 0; i < rows * cols; ++i) {
    if (!mask.data()[i] || label[static_cast<std::size_t>(i)] >= 0) continue;
    std::vector<Index> pixels{i}, stack{i};
    label[static_cast<std::size_t>(i)] = static_cast<int>(blobs.size());
    while (!stack.empty()) {
      const Index cur = stack.back();
      stack.pop_back();
      const Index cy = cur / cols, cx = cur % cols;
      for (Index dy = -1; dy <= 1; ++dy) {
        for (Index dx = -1; dx <= 1; ++dx) {
          const Index yy = cy + dy, xx = cx + dx;
          if (yy < 0 || yy >= rows || xx < 0 || xx >= cols) continue;
          const Index j = yy * cols + xx;
          if (!mask.data()[j] || label[static_cast<std::size_t>(j)] >= 0) continue;
          label[static_cast<std::size_t>(j)] = static_cast<int>(blobs.size());
          pixels.push_back(j);
          stack.push_back(j);
        }
      }
    }
    blobs.push_back(std::move(pixels));
  }

  // Jaw segments sampled every half pixel against the (closed) object mask.
  const auto jaws_free = [&](const GraspRectangle& g) {
    const auto [ja, jb] = jaw_segments(g);
    for (const auto& seg : {ja, jb}) {
      const double len = (seg[1] - seg[0]).norm();
      const int n = std::max(2, static_cast<int>(std::ceil(len * 2)));
      for (int s = 0; s <= n; ++s) {
        const Point2 p = seg[0] + (seg[1] - seg[0]) * (static_cast<double>(s) / n);
        const auto c = static_cast<Index>(std::lround(p.x())), r = static_cast<Index>(std::lround(p.y()));
        if (r >= 0 && r < rows && c >= 0 && c < cols && mask(r, c)) return false;
      }
    }
    return true;
  };

  struct Candidate {
    GraspRectangle grasp;
    double weight;
  };
  std::vector<Candidate> candidates;
  const double half = static_cast<double>(cols) / 2;
  for (const auto& blob : blobs) {
    if (blob.size() < 20) continue;
    Point2 centroid = Point2::Zero();
    for (Index i : blob) centroid += Point2(static_cast<double>(i % cols), static_cast<double>(i / cols));
    centroid /= static_cast<double>(blob.size());
    // Narrowest orientation whose jaws land on free pixels.
    std::optional<GraspRectangle> best;
    for (int k = 0; k < 12; ++k) {
      const double a = -kPi / 2 + k * kPi / 12;
      const Point2 u(std::cos(a), std::sin(a));
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (Index i : blob) {
        const double t = (Point2(static_cast<double>(i % cols), static_cast<double>(i / cols)) - centroid).dot(u);
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      }
      GraspRectangle g;
      const Point2 center = centroid + 0.5 * (lo + hi) * u;
      g.x = std::clamp(center.x(), 0.0, static_cast<double>(cols - 1));
      g.y = std::clamp(center.y(), 0.0, static_cast<double>(rows - 1));
      g.theta = normalize_angle(a);
      g.width = hi - lo + 1 + 2 * kJawMargin / mm_px;
      if (g.width > kMaxGraspWidth || (best && g.width >= best->width) || !jaws_free(g)) continue;
      best = g;
    }
    if (!best) continue;
    const double dist = std::hypot(best->x - half, best->y - half);
    candidates.push_back({*best, 1.0 / (1.0 + dist / half)});
  }

  GraspMaps out = GraspMaps::zeros(rows, cols);
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.weight > b.weight; });
  for (const auto& c : candidates) {
    const GraspMaps one = encode_labels(std::vector<GraspRectangle>{c.grasp}, rows, cols);
    for (Index i = 0; i < one.quality.size(); ++i) {
      if (one.quality.data()[i] == 0.0f || out.quality.data()[i] != 0.0f) continue;
      out.quality.data()[i] = static_cast<float>(c.weight);
      out.sin2.data()[i] = one.sin2.data()[i];
      out.cos2.data()[i] = one.cos2.data()[i];
      out.width.data()[i] = one.width.data()[i];
    }
  }
  return out;
}

GraspMaps NetModel::infer(const View& view) {
  Sample s;
  s.depth = view.depth / 1000.0f;
  if (channels_ != Channels::d) {
    if (!view.scene) throw std::invalid_argument("hrgnet: RGB input needs the scene to render color");
    s.rgb = render_rgb(*view.scene, view.viewpoint, view.camera);
  }
  s.source = "simulated view";
  PreprocessOptions opt;
  opt.channels = channels_;
  opt.window = view.camera.size;
  opt.size = net_.config().input_size;
  const Prepared p = preprocess(s, opt, 0);
  return maps_from_tensor(net_.predict(p.input), 0);
}

View capture(const Scene& scene, const Viewpoint& v, const Camera& cam) {
  return View{&scene, v, cam, render_depth(scene, v, cam)};
}

namespace {

/// Capture, infer, decode; no motion.
StepResult perceive(const Scene& scene, const Viewpoint& current, GraspModel& model, const PlannerConfig& cfg) {
  StepResult r;
  const View view = capture(scene, current, cfg.camera);
  const GraspMaps maps = model.infer(view);
  r.entropy = q_entropy(maps.quality);
  const auto grasps = decode_grasps(maps, cfg.decode);
  if (!grasps.empty()) {
    GraspRectangle g = grasps.front();
    g.z = current.z - view.depth(static_cast<Index>(g.y), static_cast<Index>(g.x));
    r.grasp = g;
  }
  r.next = current;
  return r;
}

}  // namespace

StepResult plan_step(const Scene& scene, const Viewpoint& current, GraspModel& model, const PlannerConfig& cfg) {
  StepResult r = perceive(scene, current, model, cfg);
  const auto entropy_at = [&](double dx, double dy) {
    const Viewpoint probe{current.x + dx, current.y + dy, current.z};
    return q_entropy(model.infer(capture(scene, probe, cfg.camera)).quality);
  };
  if (r.grasp) {
    const Point2 gradient((entropy_at(cfg.probe, 0) - entropy_at(-cfg.probe, 0)) / (2 * cfg.probe),
                          (entropy_at(0, cfg.probe) - entropy_at(0, -cfg.probe)) / (2 * cfg.probe));
    r.move = -cfg.gain * gradient;
    if (r.move.norm() > cfg.max_move) r.move *= cfg.max_move / r.move.norm();
  }
  r.next = Viewpoint{current.x + r.move.x(), current.y + r.move.y(), current.z - cfg.rate};
  return r;
}

std::pair<std::array<Point2, 2>, std::array<Point2, 2>> jaw_segments(const GraspRectangle& g, double height_ratio) {
  const Point2 c(g.x, g.y);
  const Point2 u(std::cos(g.theta), std::sin(g.theta));
  const Point2 v(-std::sin(g.theta), std::cos(g.theta));
  const Point2 half_len = v * (g.width * height_ratio / 2);
  const Point2 a = c + u * (g.width / 2), b = c - u * (g.width / 2);
  return {{a - half_len, a + half_len}, {b - half_len, b + half_len}};
}

GraspJudgement judge_grasp(const Scene& scene, const GraspRectangle& g) {
  if (scene.objects.empty()) throw std::invalid_argument("judge_grasp: empty scene");
  GraspJudgement j;
  const Point2 c(g.x, g.y);
  double nearest = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const double dist = point_polygon_distance(scene.objects[k].footprint, c);
    if (dist < nearest) {
      nearest = dist;
      j.target = static_cast<int>(k);
    }
  }
  j.center_inside = nearest == 0.0;
  const auto [jaw_a, jaw_b] = jaw_segments(g);
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const Polygon& fp = scene.objects[k].footprint;
    const bool hit = segment_hits(fp, jaw_a[0], jaw_a[1]) || segment_hits(fp, jaw_b[0], jaw_b[1]);
    if (static_cast<int>(k) == j.target) j.jaws_clear_of_target = !hit;
    else if (hit) j.collision = true;
  }
  j.success = j.center_inside && !j.collision && j.jaws_clear_of_target;
  return j;
}

EpisodeResult run_episode(const Scene& scene, GraspModel& model, const PlannerConfig& cfg, Policy policy) {
  if (scene.objects.empty()) throw std::invalid_argument("run_episode: scene has no objects");
  if (!(cfg.rate > 0)) throw std::invalid_argument("run_episode: descent rate must be positive");
  const double floor_z = scene.max_height() + 1.0;
  if (cfg.z_max <= floor_z) throw std::invalid_argument("run_episode: z_max is below the tallest object");

  EpisodeResult ep;
  Viewpoint v{cfg.start.x(), cfg.start.y(), cfg.z_max};
  for (int step = 0;; ++step) {
    const StepResult s =
        policy == Policy::closed_loop ? plan_step(scene, v, model, cfg) : perceive(scene, v, model, cfg);
    TraceRow row;
    row.step = step;
    row.view = v;
    row.entropy = s.entropy;
    row.grasp = s.grasp;
    if (s.grasp) {
      row.world = grasp_to_world(*s.grasp, v, cfg.camera);
      ep.final_grasp = row.world;
    }
    ep.trace.push_back(row);
    if (policy == Policy::single_shot) break;

    const double z_obj = ep.final_grasp ? ep.final_grasp->z : scene.max_height();
    const double stop = std::max(z_obj + cfg.clearance, floor_z);
    if (s.next.z <= stop) break;
    v = s.next;
  }
  if (ep.final_grasp) {
    const GraspJudgement j = judge_grasp(scene, *ep.final_grasp);
    ep.success = j.success;
    ep.collision = j.collision;
    ep.target = j.target;
  }
  return ep;
}

std::string format_trace(const EpisodeResult& ep) {
  std::string out = "step\tx\ty\tz\thas_grasp\tgx\tgy\ttheta\tw\tgz\tq\tentropy\n";
  char buf[320];
  for (const auto& r : ep.trace) {
    const GraspRectangle g = r.world.value_or(GraspRectangle{});
    std::snprintf(buf, sizeof buf, "%d\t%.3f\t%.3f\t%.3f\t%d\t%.3f\t%.3f\t%.6f\t%.3f\t%.3f\t%.6f\t%.6f\n", r.step,
                  r.view.x, r.view.y, r.view.z, r.world ? 1 : 0, g.x, g.y, g.theta, g.width, g.z, g.quality, r.entropy);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "# success=%d collision=%d target=%d\n", ep.success ? 1 : 0, ep.collision ? 1 : 0,
                ep.target);
  out += buf;
  return out;
}

}  // namespace hrg
