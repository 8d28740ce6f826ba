#pragma once

#include "hrg/tensor.hpp"

#include <Eigen/Core>

#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace hrg {

/// One executable grasp g = (x, y, θ, w, z).
///
/// Pixel coordinates with x to the right and y downward; pixel (row r, col c)
/// sits at (x = c, y = r). θ is the direction of jaw travel measured from +x
/// toward +y and kept in [-π/2, π/2). w is the jaw opening along θ in pixels.
/// The rectangle's extent across θ (the jaw plate length) is w * height_ratio.
struct GraspRectangle {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double width = 0.0;
  double z = 0.0;
  /// Smoothed quality at the grasp center when produced by the decoder.
  double quality = 0.0;
};

/// Largest representable jaw opening in pixels.
inline constexpr double kMaxGraspWidth = 150.0;
/// Rectangle extent across the jaw-travel axis, as a fraction of the width.
inline constexpr double kDefaultHeightRatio = 0.5;

using MapF = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-pixel grasp maps: quality, (sin 2θ, cos 2θ), width / 150.
struct GraspMaps {
  MapF quality;
  MapF sin2;
  MapF cos2;
  MapF width;

  static GraspMaps zeros(Index rows, Index cols);
  Index rows() const { return quality.rows(); }
  Index cols() const { return quality.cols(); }
};

/// Batch item `n` of an (N, 4, H, W) tensor.
GraspMaps maps_from_tensor(const Tensorf& t, Index n);
/// Stacks maps into an (N, 4, H, W) tensor.
Tensorf maps_to_tensor(std::span<const GraspMaps> maps);

/// Wraps θ into [-π/2, π/2).
double normalize_angle(double theta);

struct AngleCode {
  double sin2;
  double cos2;
};

struct DecodedAngle {
  double theta;
  bool degenerate;  ///< (sin, cos) too close to zero to carry an angle
};

AngleCode angle_encode(double theta);
DecodedAngle angle_decode(double sin2, double cos2);

struct EncodeOptions {
  double height_ratio = kDefaultHeightRatio;
};

/// Rasterizes ground-truth rectangles. Each rectangle paints its center third
/// along the jaw-travel axis over the full plate length: Q = 1, the encoded
/// angle, and width / 150 (clamped to 1). Pixels painted by an earlier
/// rectangle keep their values.
GraspMaps encode_labels(std::span<const GraspRectangle> rects, Index rows, Index cols,
                        const EncodeOptions& options = {});

/// True when pixel (row, col) lies in the painted region of `rect`.
bool in_painted_region(const GraspRectangle& rect, double row, double col,
                       double height_ratio = kDefaultHeightRatio);

struct DecodeOptions {
  int max_grasps = 1;
  double sigma = 2.0;
  double min_quality = 0.2;
  double nms_radius = 10.0;
  /// Relative tolerance that groups pixels into one flat peak.
  double plateau_tolerance = 1e-3;
};

/// Gaussian-smoothed quality map (separable kernel, radius ceil(3σ), edge replication).
MapF smooth_quality(const MapF& quality, double sigma);

/// Up to `max_grasps` peaks of the smoothed quality map in descending quality,
/// ties broken by lowest row-major index. Each peak is refined to the centroid
/// of its flat top. Empty when nothing reaches `min_quality`.
std::vector<GraspRectangle> decode_grasps(const GraspMaps& maps, const DecodeOptions& options = {});

/// Shannon entropy (nats) of Q normalized to a distribution. An all-zero map
/// returns log(H * W). Negative entries are rejected.
double q_entropy(const MapF& quality);

/// "x y theta w z q" text line.
std::string format_grasp(const GraspRectangle& g);
GraspRectangle parse_grasp(const std::string& line);

}  // namespace hrg
