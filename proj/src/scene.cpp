#include "hrg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace hrg {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kDiscVertices = 32;
constexpr int kPlacementTries = 200;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

SceneObject random_object(int id, ShapeFamily family, std::mt19937_64& rng) {
  const bool disc = family == ShapeFamily::disc || (family == ShapeFamily::mixed && uniform(rng, 0, 1) < 0.35);
  const double height = uniform(rng, 20.0, 60.0);
  if (disc) return make_disc(id, Point2::Zero(), uniform(rng, 30.0, 50.0), height);
  const double short_side = uniform(rng, 25.0, 50.0);
  const double long_side = uniform(rng, short_side, std::min(2.0 * short_side, 90.0));
  return make_box(id, Point2::Zero(), uniform(rng, -kPi / 2, kPi / 2), short_side, long_side, height);
}

SceneObject moved(const SceneObject& o, const Point2& center) {
  return o.disc ? make_disc(o.id, center, o.size.x(), o.height)
                : make_box(o.id, center, o.yaw, o.size.x(), o.size.y(), o.height);
}

bool inside_bounds(const Scene& s, const Polygon& p) {
  return std::all_of(p.begin(), p.end(), [&](const Point2& v) {
    return v.x() >= s.bounds_min.x() && v.x() <= s.bounds_max.x() && v.y() >= s.bounds_min.y() &&
           v.y() <= s.bounds_max.y();
  });
}

std::array<std::uint8_t, 3> object_color(int id) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 6> palette{
      {{200, 60, 50}, {60, 140, 210}, {230, 180, 40}, {90, 170, 80}, {150, 80, 170}, {230, 120, 40}}};
  return palette[static_cast<std::size_t>(id) % palette.size()];
}

}  // namespace

ShapeFamily parse_shape_family(const std::string& s) {
  if (s == "box") return ShapeFamily::box;
  if (s == "disc") return ShapeFamily::disc;
  if (s == "mixed") return ShapeFamily::mixed;
  throw std::invalid_argument("shape family must be box, disc or mixed, got '" + s + "'");
}

double Scene::max_height() const {
  double h = 0.0;
  for (const auto& o : objects) h = std::max(h, o.height);
  return h;
}

SceneObject make_box(int id, Point2 center, double yaw, double short_side, double long_side, double height) {
  SceneObject o;
  o.id = id;
  o.center = center;
  o.yaw = yaw;
  o.size = Point2(short_side, long_side);
  o.height = height;
  // Short side along the yaw direction.
  const Point2 u = Point2(std::cos(yaw), std::sin(yaw)) * (short_side / 2);
  const Point2 v = Point2(-std::sin(yaw), std::cos(yaw)) * (long_side / 2);
  o.footprint = {center - u - v, center + u - v, center + u + v, center - u + v};
  return o;
}

SceneObject make_disc(int id, Point2 center, double diameter, double height) {
  SceneObject o;
  o.id = id;
  o.disc = true;
  o.center = center;
  o.size = Point2(diameter, diameter);
  o.height = height;
  for (int k = 0; k < kDiscVertices; ++k) {
    const double a = 2 * kPi * k / kDiscVertices;
    o.footprint.push_back(center + Point2(std::cos(a), std::sin(a)) * (diameter / 2));
  }
  return o;
}

Scene make_scene(const SceneSpec& spec) {
  if (spec.count < 0) throw std::invalid_argument("make_scene: negative object count");
  if (spec.adjacency < 0 || spec.adjacency > 2) throw std::invalid_argument("make_scene: adjacency must be 0, 1 or 2");
  std::mt19937_64 rng(spec.seed);
  Scene scene;
  for (int k = 0; k < spec.count; ++k) {
    const SceneObject shape = random_object(k, spec.family, rng);
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementTries && !placed; ++attempt) {
      SceneObject o;
      double min_gap = 0.0;
      if (k == 0) {
        o = moved(shape, Point2(uniform(rng, -1, 1), uniform(rng, -1, 1)) * spec.center_jitter);
      } else if (spec.adjacency == 2) {
        min_gap = 30.0;
        o = moved(shape, Point2(uniform(rng, -150, 150), uniform(rng, -150, 150)));
      } else {
        const double gap = spec.adjacency == 0 ? uniform(rng, 0.5, 2.0) : uniform(rng, 3.0, 8.0);
        min_gap = spec.adjacency == 0 ? 0.5 : 3.0;
        const auto& anchor = scene.objects[std::uniform_int_distribution<std::size_t>(0, scene.objects.size() - 1)(rng)];
        const double phi = uniform(rng, -kPi, kPi);
        const Point2 dir(std::cos(phi), std::sin(phi));
        // Distance to the anchor is nondecreasing along the ray; bisect for the gap.
        double lo = 0.0, hi = 400.0;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          if (polygon_distance(moved(shape, anchor.center + dir * mid).footprint, anchor.footprint) < gap) lo = mid;
          else hi = mid;
        }
        o = moved(shape, anchor.center + dir * hi);
        min_gap = std::min(min_gap, gap) - 1e-6;
      }
      if (!inside_bounds(scene, o.footprint)) continue;
      const bool clear = std::all_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& other) {
        return polygon_distance(o.footprint, other.footprint) >= min_gap;
      });
      if (!clear) continue;
      scene.objects.push_back(std::move(o));
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error("make_scene: could not place object " + std::to_string(k) + " after " +
                               std::to_string(kPlacementTries) + " tries (seed " + std::to_string(spec.seed) + ")");
    }
  }
  return scene;
}

double mm_per_pixel(const Viewpoint& v, const Camera& cam) { return v.z / cam.focal; }

Point2 pixel_to_world(const Viewpoint& v, const Camera& cam, double row, double col) {
  const double s = mm_per_pixel(v, cam);
  const double half = static_cast<double>(cam.size) / 2;
  return {v.x + (col + 0.5 - half) * s, v.y + (row + 0.5 - half) * s};
}

Point2 world_to_pixel(const Viewpoint& v, const Camera& cam, const Point2& world) {
  const double s = mm_per_pixel(v, cam);
  const double half = static_cast<double>(cam.size) / 2;
  return {(world.y() - v.y) / s + half - 0.5, (world.x() - v.x) / s + half - 0.5};
}

GraspRectangle grasp_to_world(const GraspRectangle& g, const Viewpoint& v, const Camera& cam) {
  GraspRectangle w = g;
  const Point2 p = pixel_to_world(v, cam, g.y, g.x);
  w.x = p.x();
  w.y = p.y();
  w.width = g.width * mm_per_pixel(v, cam);
  return w;
}

GraspRectangle grasp_to_pixels(const GraspRectangle& g, const Viewpoint& v, const Camera& cam) {
  GraspRectangle p = g;
  const Point2 rc = world_to_pixel(v, cam, Point2(g.x, g.y));
  p.x = rc.y();
  p.y = rc.x();
  p.width = g.width / mm_per_pixel(v, cam);
  return p;
}

namespace {

/// Index of the tallest object covering each pixel, or -1.
std::vector<int> cover(const Scene& scene, const Viewpoint& v, const Camera& cam) {
  const Index n = cam.size;
  if (v.z <= scene.max_height()) {
    throw std::invalid_argument("render: camera at z=" + std::to_string(v.z) + " is not above the tallest object (" +
                                std::to_string(scene.max_height()) + ")");
  }
  std::vector<int> owner(static_cast<std::size_t>(n * n), -1);
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const auto& o = scene.objects[k];
    double r0 = 1e300, r1 = -1e300, c0 = 1e300, c1 = -1e300;
    for (const auto& p : o.footprint) {
      const Point2 rc = world_to_pixel(v, cam, p);
      r0 = std::min(r0, rc.x());
      r1 = std::max(r1, rc.x());
      c0 = std::min(c0, rc.y());
      c1 = std::max(c1, rc.y());
    }
    const Index rs = std::max<Index>(0, static_cast<Index>(std::floor(r0))), re = std::min<Index>(n - 1, static_cast<Index>(std::ceil(r1)));
    const Index cs = std::max<Index>(0, static_cast<Index>(std::floor(c0))), ce = std::min<Index>(n - 1, static_cast<Index>(std::ceil(c1)));
    for (Index r = rs; r <= re; ++r) {
      for (Index c = cs; c <= ce; ++c) {
        if (!contains(o.footprint, pixel_to_world(v, cam, static_cast<double>(r), static_cast<double>(c)))) continue;
        int& cur = owner[static_cast<std::size_t>(r * n + c)];
        if (cur < 0 || scene.objects[static_cast<std::size_t>(cur)].height < o.height) cur = static_cast<int>(k);
      }
    }
  }
  return owner;
}

}  // namespace

MapF render_depth(const Scene& scene, const Viewpoint& v, const Camera& cam) {
  const auto owner = cover(scene, v, cam);
  MapF depth(cam.size, cam.size);
  for (Index i = 0; i < depth.size(); ++i) {
    const int k = owner[static_cast<std::size_t>(i)];
    depth.data()[i] = static_cast<float>(v.z - (k < 0 ? 0.0 : scene.objects[static_cast<std::size_t>(k)].height));
  }
  return depth;
}

RgbImage render_rgb(const Scene& scene, const Viewpoint& v, const Camera& cam) {
  const auto owner = cover(scene, v, cam);
  RgbImage out(cam.size, cam.size, 128);
  for (Index i = 0; i < cam.size * cam.size; ++i) {
    const int k = owner[static_cast<std::size_t>(i)];
    if (k < 0) continue;
    const auto color = object_color(scene.objects[static_cast<std::size_t>(k)].id);
    for (int ch = 0; ch < 3; ++ch) out.pixels[static_cast<std::size_t>(i * 3 + ch)] = color[static_cast<std::size_t>(ch)];
  }
  return out;
}

std::vector<GraspRectangle> object_grasps(const SceneObject& o, double margin) {
  std::vector<GraspRectangle> out;
  const double width = o.size.x() + 2 * margin;
  const auto at = [&](const Point2& c, double theta) {
    GraspRectangle g;
    g.x = c.x();
    g.y = c.y();
    g.theta = normalize_angle(theta);
    g.width = width;
    g.z = o.height;
    g.quality = 1.0;
    return g;
  };
  if (o.disc) {
    out.push_back(at(o.center, 0.0));
    return out;
  }
  out.push_back(at(o.center, o.yaw));
  if (o.size.y() > 1.3 * o.size.x()) {
    const Point2 axis(-std::sin(o.yaw), std::cos(o.yaw));
    const double offset = 0.3 * (o.size.y() - o.size.x());
    out.push_back(at(o.center + axis * offset, o.yaw));
    out.push_back(at(o.center - axis * offset, o.yaw));
  }
  return out;
}

}  // namespace hrg
