#pragma once

#include "hrg/grasp.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace hrg {

using Point2 = Eigen::Vector2d;
using Polygon = std::vector<Point2>;

/// Corners of the grasp rectangle: w along θ, w * height_ratio across.
/// Counter-clockwise in (x, y).
Polygon rect_polygon(const GraspRectangle& g, double height_ratio = kDefaultHeightRatio);

double signed_area(const Polygon& p);
double polygon_area(const Polygon& p);

/// Sutherland-Hodgman clip of `subject` against a convex `clip` polygon.
Polygon clip_convex(const Polygon& subject, const Polygon& clip);

double convex_iou(const Polygon& a, const Polygon& b);

/// Point inside or on the boundary of a convex polygon.
bool contains(const Polygon& convex, const Point2& p);
double segment_distance(const Point2& p, const Point2& a, const Point2& b);
bool segments_intersect(const Point2& a, const Point2& b, const Point2& c, const Point2& d);
bool segment_hits(const Polygon& convex, const Point2& a, const Point2& b);
/// Gap between two convex polygons; 0 when they touch or overlap.
double polygon_distance(const Polygon& a, const Polygon& b);
double rect_iou(const GraspRectangle& a, const GraspRectangle& b, double height_ratio = kDefaultHeightRatio);

/// |a - b| folded by the π symmetry of a parallel gripper, in [0, π/2].
double angle_difference(double a, double b);

struct MatchRule {
  double min_iou = 0.25;
  double max_angle = 30.0 * std::numbers::pi / 180.0;
  double height_ratio = kDefaultHeightRatio;
};

/// Rectangle metric: some ground truth overlaps by more than `min_iou` with
/// an angle difference below `max_angle`.
bool is_match(const GraspRectangle& pred, std::span<const GraspRectangle> truths, const MatchRule& rule = {});

}  // namespace hrg
