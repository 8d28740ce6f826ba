#include "hrg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hrg {

namespace {

double cross(const Point2& a, const Point2& b) { return a.x() * b.y() - a.y() * b.x(); }

Polygon ccw(Polygon p) {
  if (signed_area(p) < 0) std::reverse(p.begin(), p.end());
  return p;
}

}  // namespace

Polygon rect_polygon(const GraspRectangle& g, double height_ratio) {
  const Point2 c(g.x, g.y);
  const Point2 along = Point2(std::cos(g.theta), std::sin(g.theta)) * (g.width / 2);
  const Point2 across = Point2(-std::sin(g.theta), std::cos(g.theta)) * (g.width * height_ratio / 2);
  return ccw({c - along - across, c + along - across, c + along + across, c - along + across});
}

double signed_area(const Polygon& p) {
  double a = 0;
  for (std::size_t i = 0; i < p.size(); ++i) a += cross(p[i], p[(i + 1) % p.size()]);
  return 0.5 * a;
}

double polygon_area(const Polygon& p) { return std::abs(signed_area(p)); }

Polygon clip_convex(const Polygon& subject, const Polygon& clip_in) {
  const Polygon clip = ccw(clip_in);
  Polygon out = subject;
  for (std::size_t i = 0; i < clip.size() && !out.empty(); ++i) {
    const Point2& a = clip[i];
    const Point2 edge = clip[(i + 1) % clip.size()] - a;
    const auto side = [&](const Point2& p) { return cross(edge, p - a); };
    Polygon in = std::move(out);
    out.clear();
    for (std::size_t j = 0; j < in.size(); ++j) {
      const Point2& p = in[j];
      const Point2& q = in[(j + 1) % in.size()];
      const double sp = side(p), sq = side(q);
      if (sp >= 0) out.push_back(p);
      if ((sp >= 0) != (sq >= 0)) out.push_back(p + (q - p) * (sp / (sp - sq)));
    }
  }
  return out;
}

double convex_iou(const Polygon& a, const Polygon& b) {
  const double area_a = polygon_area(a), area_b = polygon_area(b);
  if (area_a <= 0 || area_b <= 0) return 0.0;
  const double inter = polygon_area(clip_convex(a, b));
  const double uni = area_a + area_b - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

bool contains(const Polygon& convex_in, const Point2& p) {
  if (convex_in.size() < 3) return false;
  const Polygon convex = ccw(convex_in);
  for (std::size_t i = 0; i < convex.size(); ++i) {
    const Point2& a = convex[i];
    const Point2& b = convex[(i + 1) % convex.size()];
    if (cross(b - a, p - a) < -1e-12) return false;
  }
  return true;
}

double segment_distance(const Point2& p, const Point2& a, const Point2& b) {
  const Point2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

bool segments_intersect(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  constexpr double eps = 1e-12;
  return (std::abs(d1) <= eps && segment_distance(c, a, b) <= 1e-9) ||
         (std::abs(d2) <= eps && segment_distance(d, a, b) <= 1e-9) ||
         (std::abs(d3) <= eps && segment_distance(a, c, d) <= 1e-9) ||
         (std::abs(d4) <= eps && segment_distance(b, c, d) <= 1e-9);
}

bool segment_hits(const Polygon& convex, const Point2& a, const Point2& b) {
  if (contains(convex, a) || contains(convex, b)) return true;
  for (std::size_t i = 0; i < convex.size(); ++i) {
    if (segments_intersect(a, b, convex[i], convex[(i + 1) % convex.size()])) return true;
  }
  return false;
}

double polygon_distance(const Polygon& a, const Polygon& b) {
  for (const auto& p : a) {
    if (contains(b, p)) return 0.0;
  }
  for (const auto& p : b) {
    if (contains(a, p)) return 0.0;
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Point2& a0 = a[i];
    const Point2& a1 = a[(i + 1) % a.size()];
    for (std::size_t j = 0; j < b.size(); ++j) {
      const Point2& b0 = b[j];
      const Point2& b1 = b[(j + 1) % b.size()];
      if (segments_intersect(a0, a1, b0, b1)) return 0.0;
      best = std::min({best, segment_distance(a0, b0, b1), segment_distance(b0, a0, a1)});
    }
  }
  return best;
}

double rect_iou(const GraspRectangle& a, const GraspRectangle& b, double height_ratio) {
  return convex_iou(rect_polygon(a, height_ratio), rect_polygon(b, height_ratio));
}

double angle_difference(double a, double b) {
  double d = std::fmod(std::abs(a - b), std::numbers::pi);
  return std::min(d, std::numbers::pi - d);
}

bool is_match(const GraspRectangle& pred, std::span<const GraspRectangle> truths, const MatchRule& rule) {
  for (const auto& t : truths) {
    if (angle_difference(pred.theta, t.theta) < rule.max_angle && rect_iou(pred, t, rule.height_ratio) > rule.min_iou) {
      return true;
    }
  }
  return false;
}

}  // namespace hrg
