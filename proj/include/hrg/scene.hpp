#pragma once

#include "hrg/geometry.hpp"
#include "hrg/grasp.hpp"
#include "hrg/image.hpp"

#include <cstdint>
#include <vector>

namespace hrg {

// Tabletop world in millimetres: table plane at z = 0, camera above looking
// straight down, world x along image columns and world y along image rows.

enum class ShapeFamily { box, disc, mixed };

ShapeFamily parse_shape_family(const std::string& s);

struct SceneObject {
  int id = 0;
  bool disc = false;
  Point2 center = Point2::Zero();
  double yaw = 0.0;
  Point2 size = Point2::Zero();  ///< box: (short, long) sides; disc: (diameter, diameter)
  double height = 0.0;
  Polygon footprint;
};

struct Scene {
  std::vector<SceneObject> objects;
  Point2 bounds_min{-200.0, -200.0};
  Point2 bounds_max{200.0, 200.0};

  double max_height() const;
};

struct SceneSpec {
  int count = 1;
  ShapeFamily family = ShapeFamily::mixed;
  /// 0: touching (gap 0.5-2 mm), 1: adjacent (gap 3-8 mm), 2: scattered (gap >= 30 mm).
  int adjacency = 2;
  /// Random offset of the first object from the workspace center, in mm.
  double center_jitter = 0.0;
  std::uint64_t seed = 0;
};

/// Deterministic scene. Object 0 is the anchor; every later object is placed
/// next to an earlier one at the gap the adjacency level prescribes.
Scene make_scene(const SceneSpec& spec);

SceneObject make_box(int id, Point2 center, double yaw, double short_side, double long_side, double height);
SceneObject make_disc(int id, Point2 center, double diameter, double height);

struct Camera {
  Index size = 224;
  double focal = 224.0;  ///< pixels
};

struct Viewpoint {
  double x = 0.0;
  double y = 0.0;
  double z = 500.0;
};

double mm_per_pixel(const Viewpoint& v, const Camera& cam);
/// World point at the center of pixel (row, col).
Point2 pixel_to_world(const Viewpoint& v, const Camera& cam, double row, double col);
/// (row, col) of a world point.
Point2 world_to_pixel(const Viewpoint& v, const Camera& cam, const Point2& world);

GraspRectangle grasp_to_world(const GraspRectangle& pixel, const Viewpoint& v, const Camera& cam);
GraspRectangle grasp_to_pixels(const GraspRectangle& world, const Viewpoint& v, const Camera& cam);

/// Camera-to-surface distance per pixel; the tallest object wins overlaps.
MapF render_depth(const Scene& scene, const Viewpoint& v, const Camera& cam);
/// Top-down color rendering matching render_depth.
RgbImage render_rgb(const Scene& scene, const Viewpoint& v, const Camera& cam);

/// Jaw clearance added on each side of an object by its reference grasps, mm.
inline constexpr double kJawMargin = 8.0;

/// Reference grasps in world mm: across the short side of a box (at its
/// center and, for elongated boxes, at two more points along the long side),
/// or across the diameter of a disc.
std::vector<GraspRectangle> object_grasps(const SceneObject& object, double margin = kJawMargin);

}  // namespace hrg
