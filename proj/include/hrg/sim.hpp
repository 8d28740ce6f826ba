#pragma once

#include "hrg/dataset.hpp"
#include "hrg/grasp.hpp"
#include "hrg/model.hpp"
#include "hrg/scene.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hrg {

/// What a perception model sees at one viewpoint. `scene` is only for
/// privileged (oracle) models.
struct View {
  const Scene* scene = nullptr;
  Viewpoint viewpoint;
  Camera camera;
  MapF depth;  ///< mm
};

class GraspModel {
 public:
  virtual ~GraspModel() = default;
  virtual std::string name() const = 0;
  virtual GraspMaps infer(const View& view) = 0;
};

/// Quality assigned to pixels without a grasp by the oracle models.
inline constexpr float kOracleFloor = 0.02f;

/// Ground truth: the reference grasps of every object that would succeed in
/// this scene, painted in image space.
class SceneOracle : public GraspModel {
 public:
  std::string name() const override { return "scene-oracle"; }
  GraspMaps infer(const View& view) override;
};

/// A deliberately wrong oracle: one grasp centered on the gap between objects
/// 0 and 1, jaws travelling across the gap.
class CorruptedOracle : public GraspModel {
 public:
  explicit CorruptedOracle(double width = 30.0) : width_(width) {}
  std::string name() const override { return "corrupted-oracle"; }
  GraspMaps infer(const View& view) override;

 private:
  double width_;
};

/// Image-only baseline: segments the depth image into blobs after a
/// morphological closing of `merge_radius` pixels, so nearby objects fuse when
/// seen from far away, and grasps each blob across the narrowest direction
/// whose jaws land on free pixels. Blobs nearer the image center score higher.
class GeometricModel : public GraspModel {
 public:
  explicit GeometricModel(int merge_radius = 3, double min_height = 5.0)
      : merge_radius_(merge_radius), min_height_(min_height) {}
  std::string name() const override { return "geometric"; }
  GraspMaps infer(const View& view) override;

 private:
  int merge_radius_;
  double min_height_;
};

/// Runs a trained network on the rendered view.
class NetModel : public GraspModel {
 public:
  NetModel(HrgNet<float>& net, Channels channels) : net_(net), channels_(channels) {}
  std::string name() const override { return "hrgnet"; }
  GraspMaps infer(const View& view) override;

 private:
  HrgNet<float>& net_;
  Channels channels_;
};

struct PlannerConfig {
  Camera camera;
  double z_max = 560.0;      ///< mm
  double clearance = 100.0;  ///< stop once z <= object top + clearance
  double rate = 40.0;        ///< descent per step, mm
  double gain = 2000.0;      ///< horizontal mm per unit of entropy gradient (1/mm)
  double probe = 10.0;       ///< finite-difference offset, mm
  double max_move = 15.0;    ///< horizontal step clamp, mm
  Point2 start{0.0, 0.0};
  DecodeOptions decode;
};

struct StepResult {
  Viewpoint next;
  std::optional<GraspRectangle> grasp;  ///< pixels at the current viewpoint
  double entropy = 0.0;
  Point2 move = Point2::Zero();
};

View capture(const Scene& scene, const Viewpoint& v, const Camera& cam);

/// Perceive, decode, estimate the entropy gradient from four probe views,
/// move against it (clamped) and descend by `rate`.
StepResult plan_step(const Scene& scene, const Viewpoint& current, GraspModel& model, const PlannerConfig& config);

struct TraceRow {
  int step = 0;
  Viewpoint view;
  std::optional<GraspRectangle> grasp;  ///< pixels
  std::optional<GraspRectangle> world;  ///< mm
  double entropy = 0.0;
};

struct GraspJudgement {
  bool success = false;
  bool collision = false;
  bool center_inside = false;
  bool jaws_clear_of_target = false;
  int target = -1;
};

/// Jaw segments sit at ±w/2 along θ with length w * height_ratio.
std::pair<std::array<Point2, 2>, std::array<Point2, 2>> jaw_segments(const GraspRectangle& world,
                                                                      double height_ratio = kDefaultHeightRatio);

GraspJudgement judge_grasp(const Scene& scene, const GraspRectangle& world);

enum class Policy { closed_loop, single_shot };

struct EpisodeResult {
  bool success = false;
  bool collision = false;
  int target = -1;
  std::vector<TraceRow> trace;
  std::optional<GraspRectangle> final_grasp;  ///< world mm
};

/// Closed loop: plan_step from z_max until z <= z_obj + clearance, where z_obj
/// is the height of the object under the latest grasp. Single shot: one
/// prediction at z_max, executed as is.
EpisodeResult run_episode(const Scene& scene, GraspModel& model, const PlannerConfig& config,
                          Policy policy = Policy::closed_loop);

/// "step x y z has_grasp gx gy theta w gz q entropy" rows; grasp in world mm.
std::string format_trace(const EpisodeResult& episode);

}  // namespace hrg
