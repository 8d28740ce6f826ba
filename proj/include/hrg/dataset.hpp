#pragma once

#include "hrg/geometry.hpp"
#include "hrg/grasp.hpp"
#include "hrg/image.hpp"
#include "hrg/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hrg {

enum class Channels { d, rgb, rgbd };

Channels parse_channels(const std::string& s);
std::string to_string(Channels c);
Index channel_count(Channels c);

enum class DatasetKind { cornell, jacquard, synthetic };

DatasetKind parse_dataset_kind(const std::string& s);
std::string to_string(DatasetKind k);

/// One labelled view. Parsers record image paths and leave the pixels to
/// load_images(), so a parsed dataset stays small.
struct Sample {
  RgbImage rgb;  ///< empty when absent or not loaded
  MapF depth;    ///< 0x0 when absent or not loaded
  std::vector<GraspRectangle> rects;
  std::string object_id;
  std::string source;

  std::filesystem::path rgb_path;
  std::filesystem::path depth_path;

  bool has_rgb() const { return !rgb.empty() || !rgb_path.empty(); }
  bool has_depth() const { return depth.size() > 0 || !depth_path.empty(); }
  bool usable() const { return !rects.empty(); }
};

/// Reads deferred images. Depth from a Cornell point-cloud file becomes
/// range in metres on the 480x640 grid.
Sample load_images(const Sample& sample);

/// Cornell point-cloud text file ("x y z rgb index" rows after the header).
MapF read_cornell_cloud(const std::filesystem::path& path, Index rows = 480, Index cols = 640);

struct Dataset {
  DatasetKind kind = DatasetKind::synthetic;
  std::vector<Sample> samples;
  std::vector<std::string> warnings;

  std::size_t size() const { return samples.size(); }
};

/// Cornell rectangle file: 4 lines of "x y" per rectangle. Edge 1-2 gives the
/// jaw-travel direction and the opening. Rectangles with a NaN vertex are
/// dropped and reported in `warnings`.
std::vector<GraspRectangle> parse_cornell_rects(const std::filesystem::path& path, std::vector<std::string>& warnings);

/// Jacquard grasp file: "x;y;theta_deg;opening;jaw_size" per line.
std::vector<GraspRectangle> parse_jacquard_grasps(const std::filesystem::path& path, std::vector<std::string>& warnings);

/// Walks the tree in sorted path order; one sample per "pcdNNNNr.png" with a
/// "pcdNNNNcpos.txt". Depth comes from "pcdNNNNd.tiff" when present, else from
/// the "pcdNNNN.txt" cloud. Object ids come from a "z.txt" mapping
/// ("image object ...") when one exists, else the image number.
Dataset parse_cornell(const std::filesystem::path& root);

/// One sample per "*_grasps.txt"; images "*_RGB.png" and "*_perfect_depth.tiff";
/// object id is the parent directory name.
Dataset parse_jacquard(const std::filesystem::path& root);

struct SyntheticOptions {
  int max_objects = 1;
  double camera_height = 300.0;  ///< mm
  Index image_size = 224;
};

/// Rendered tabletop scenes with reference grasps; depth in metres.
Dataset make_synthetic(int count, std::uint64_t seed, const SyntheticOptions& options = {});

enum class SplitMode { iw, ow };

SplitMode parse_split_mode(const std::string& s);
std::string to_string(SplitMode m);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// IW: seeded shuffle of sample indices into near-equal folds. OW: the same
/// over distinct object ids, so no object is on both sides of a fold.
std::vector<Fold> split(const Dataset& dataset, SplitMode mode, int folds, std::uint64_t seed);

/// Sample count and per-fold indices as key=value text.
void write_manifest(const std::filesystem::path& path, const Dataset& dataset, SplitMode mode, std::uint64_t seed,
                    const std::vector<Fold>& folds);

/// Maps output pixel q to source point center + R(-rotation) (q - size/2) * scale.
struct CropTransform {
  Point2 center{0.0, 0.0};  ///< source (x, y)
  double scale = 1.0;        ///< source pixels per output pixel
  int quarter_turns = 0;     ///< content rotated by quarter_turns * π/2
  Index size = 224;

  Point2 to_output(const Point2& source) const;
  Point2 to_source(const Point2& output) const;
  GraspRectangle apply(const GraspRectangle& g) const;
};

/// Bilinear (or nearest) resampling; outside samples replicate the border.
MapF resample(const MapF& source, const CropTransform& t, bool nearest = false);

/// Invalid (zero or non-finite) pixels take the value of the nearest valid one.
MapF inpaint_nearest(const MapF& depth);

struct PreprocessOptions {
  Channels channels = Channels::rgbd;
  bool augment = false;
  /// Source window side before zoom; 0 picks 224, or the shorter image side
  /// when that exceeds 480 (Jacquard).
  Index window = 0;
  Index size = 224;
  double min_zoom = 0.8;
  double max_shift = 0.1;  ///< random crop offset, fraction of the window
  int max_tries = 10;
};

struct Prepared {
  Tensorf input;  ///< (1, C, size, size)
  GraspMaps target;
  std::vector<GraspRectangle> rects;  ///< in output pixels
  CropTransform transform;
};

Prepared preprocess(const Sample& sample, const PreprocessOptions& options, std::uint64_t seed);

}  // namespace hrg
