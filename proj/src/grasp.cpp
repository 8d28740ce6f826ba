#include "hrg/grasp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hrg {

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

GraspMaps GraspMaps::zeros(Index rows, Index cols) {
  return GraspMaps{MapF::Zero(rows, cols), MapF::Zero(rows, cols), MapF::Zero(rows, cols), MapF::Zero(rows, cols)};
}

GraspMaps maps_from_tensor(const Tensorf& t, Index n) {
  const Shape& s = t.shape();
  if (s.c != 4) throw std::invalid_argument("maps_from_tensor: expected 4 channels, got " + s.str());
  GraspMaps m;
  m.quality = t.channel(n, 0);
  m.sin2 = t.channel(n, 1);
  m.cos2 = t.channel(n, 2);
  m.width = t.channel(n, 3);
  return m;
}

Tensorf maps_to_tensor(std::span<const GraspMaps> maps) {
  if (maps.empty()) throw std::invalid_argument("maps_to_tensor: empty batch");
  const Index h = maps[0].rows(), w = maps[0].cols();
  Tensorf t(Shape{static_cast<Index>(maps.size()), 4, h, w});
  for (std::size_t n = 0; n < maps.size(); ++n) {
    const auto& m = maps[n];
    if (m.rows() != h || m.cols() != w) throw std::invalid_argument("maps_to_tensor: inconsistent map sizes");
    t.channel(n, 0) = m.quality.matrix();
    t.channel(n, 1) = m.sin2.matrix();
    t.channel(n, 2) = m.cos2.matrix();
    t.channel(n, 3) = m.width.matrix();
  }
  return t;
}

double normalize_angle(double theta) {
  double t = std::fmod(theta + kPi / 2, kPi);
  if (t < 0) t += kPi;
  t -= kPi / 2;
  if (t >= kPi / 2) t -= kPi;
  return t;
}

AngleCode angle_encode(double theta) { return {std::sin(2 * theta), std::cos(2 * theta)}; }

DecodedAngle angle_decode(double sin2, double cos2) {
  if (std::hypot(sin2, cos2) < 1e-6) return {0.0, true};
  return {normalize_angle(0.5 * std::atan2(sin2, cos2)), false};
}

bool in_painted_region(const GraspRectangle& r, double row, double col, double height_ratio) {
  const double dx = col - r.x, dy = row - r.y;
  const double c = std::cos(r.theta), s = std::sin(r.theta);
  const double along = dx * c + dy * s;
  const double across = -dx * s + dy * c;
  constexpr double eps = 1e-9;
  return std::abs(along) <= r.width / 6.0 + eps && std::abs(across) <= r.width * height_ratio / 2.0 + eps;
}

GraspMaps encode_labels(std::span<const GraspRectangle> rects, Index rows, Index cols, const EncodeOptions& options) {
  GraspMaps m = GraspMaps::zeros(rows, cols);
  for (const auto& r : rects) {
    if (!(r.x >= 0 && r.x <= cols - 1 && r.y >= 0 && r.y <= rows - 1)) {
      throw std::invalid_argument("encode_labels: rectangle center (" + std::to_string(r.x) + ", " +
                                  std::to_string(r.y) + ") outside " + std::to_string(cols) + "x" +
                                  std::to_string(rows) + " image");
    }
    const AngleCode code = angle_encode(r.theta);
    const float width = static_cast<float>(std::min(1.0, r.width / kMaxGraspWidth));
    const double reach = std::hypot(r.width / 6.0, r.width * options.height_ratio / 2.0) + 1.0;
    const Index r0 = std::max<Index>(0, static_cast<Index>(std::floor(r.y - reach)));
    const Index r1 = std::min<Index>(rows - 1, static_cast<Index>(std::ceil(r.y + reach)));
    const Index c0 = std::max<Index>(0, static_cast<Index>(std::floor(r.x - reach)));
    const Index c1 = std::min<Index>(cols - 1, static_cast<Index>(std::ceil(r.x + reach)));
    for (Index y = r0; y <= r1; ++y) {
      for (Index x = c0; x <= c1; ++x) {
        if (m.quality(y, x) == 1.0f) continue;
        if (!in_painted_region(r, static_cast<double>(y), static_cast<double>(x), options.height_ratio)) continue;
        m.quality(y, x) = 1.0f;
        m.sin2(y, x) = static_cast<float>(code.sin2);
        m.cos2(y, x) = static_cast<float>(code.cos2);
        m.width(y, x) = width;
      }
    }
  }
  return m;
}

MapF smooth_quality(const MapF& q, double sigma) {
  if (sigma <= 0) return q;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double total = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (double& k : kernel) k /= total;

  const Index rows = q.rows(), cols = q.cols();
  Eigen::ArrayXXd tmp(rows, cols);
  for (Index y = 0; y < rows; ++y) {
    for (Index x = 0; x < cols; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const Index xx = std::clamp<Index>(x + i, 0, cols - 1);
        acc += kernel[i + radius] * q(y, xx);
      }
      tmp(y, x) = acc;
    }
  }
  MapF out(rows, cols);
  for (Index y = 0; y < rows; ++y) {
    for (Index x = 0; x < cols; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const Index yy = std::clamp<Index>(y + i, 0, rows - 1);
        acc += kernel[i + radius] * tmp(yy, x);
      }
      out(y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

std::vector<GraspRectangle> decode_grasps(const GraspMaps& maps, const DecodeOptions& opt) {
  if (opt.max_grasps < 1) throw std::invalid_argument("decode_grasps: max_grasps must be >= 1");
  const MapF s = smooth_quality(maps.quality, opt.sigma);
  const Index rows = s.rows(), cols = s.cols();

  std::vector<Index> candidates;
  for (Index y = 0; y < rows; ++y) {
    for (Index x = 0; x < cols; ++x) {
      const float v = s(y, x);
      if (v < opt.min_quality) continue;
      bool peak = true;
      for (Index dy = -1; dy <= 1 && peak; ++dy) {
        for (Index dx = -1; dx <= 1; ++dx) {
          const Index yy = y + dy, xx = x + dx;
          if ((dy || dx) && yy >= 0 && yy < rows && xx >= 0 && xx < cols && s(yy, xx) > v) {
            peak = false;
            break;
          }
        }
      }
      if (peak) candidates.push_back(y * cols + x);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](Index a, Index b) {
    const float va = s(a / cols, a % cols), vb = s(b / cols, b % cols);
    return va != vb ? va > vb : a < b;
  });

  std::vector<GraspRectangle> out;
  std::vector<char> consumed(static_cast<std::size_t>(rows * cols), 0);
  std::vector<Index> stack;
  for (Index idx : candidates) {
    if (static_cast<int>(out.size()) >= opt.max_grasps) break;
    if (consumed[idx]) continue;
    const Index py = idx / cols, px = idx % cols;
    const float peak = s(py, px);
    bool suppressed = false;
    for (const auto& g : out) {
      if (std::hypot(g.x - px, g.y - py) < opt.nms_radius) suppressed = true;
    }
    if (suppressed) continue;

    // Flat top: connected pixels within tolerance of the peak value.
    const float floor = static_cast<float>(peak * (1.0 - opt.plateau_tolerance));
    double sum_y = 0, sum_x = 0;
    Index count = 0;
    stack.assign(1, idx);
    consumed[idx] = 1;
    while (!stack.empty()) {
      const Index cur = stack.back();
      stack.pop_back();
      const Index cy = cur / cols, cx = cur % cols;
      sum_y += cy;
      sum_x += cx;
      ++count;
      const Index nbr[4][2] = {{cy - 1, cx}, {cy + 1, cx}, {cy, cx - 1}, {cy, cx + 1}};
      for (const auto& nb : nbr) {
        if (nb[0] < 0 || nb[0] >= rows || nb[1] < 0 || nb[1] >= cols) continue;
        const Index ni = nb[0] * cols + nb[1];
        if (consumed[ni] || s(nb[0], nb[1]) < floor) continue;
        consumed[ni] = 1;
        stack.push_back(ni);
      }
    }
    const Index cy = std::clamp<Index>(std::lround(sum_y / count), 0, rows - 1);
    const Index cx = std::clamp<Index>(std::lround(sum_x / count), 0, cols - 1);
    bool near_selected = false;
    for (const auto& g : out) {
      if (std::hypot(g.x - cx, g.y - cy) < opt.nms_radius) near_selected = true;
    }
    if (near_selected) continue;

    GraspRectangle g;
    g.x = static_cast<double>(cx);
    g.y = static_cast<double>(cy);
    g.theta = angle_decode(maps.sin2(cy, cx), maps.cos2(cy, cx)).theta;
    g.width = kMaxGraspWidth * std::clamp(static_cast<double>(maps.width(cy, cx)), 0.0, 1.0);
    g.quality = peak;
    out.push_back(g);
  }
  return out;
}

double q_entropy(const MapF& q) {
  if ((q < 0.0f).any()) throw std::invalid_argument("q_entropy: quality map has negative entries");
  const double n = static_cast<double>(q.size());
  const double total = q.cast<double>().sum();
  if (total <= 0.0) return std::log(n);
  double h = 0.0;
  for (Index i = 0; i < q.size(); ++i) {
    const double p = q.data()[i] / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::string format_grasp(const GraspRectangle& g) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.3f %.3f %.6f %.3f %.3f %.6f", g.x, g.y, g.theta, g.width, g.z, g.quality);
  return buf;
}

GraspRectangle parse_grasp(const std::string& line) {
  std::istringstream in(line);
  GraspRectangle g;
  if (!(in >> g.x >> g.y >> g.theta >> g.width >> g.z >> g.quality)) {
    throw std::invalid_argument("parse_grasp: expected 'x y theta w z q', got '" + line + "'");
  }
  return g;
}

}  // namespace hrg
