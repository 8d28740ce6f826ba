#pragma once

#include "hrg/grasp.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hrg {

/// 8-bit interleaved RGB, row-major.
struct RgbImage {
  Index rows = 0;
  Index cols = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(Index r, Index c, std::uint8_t fill = 0)
      : rows(r), cols(c), pixels(static_cast<std::size_t>(r * c * 3), fill) {}

  bool empty() const { return pixels.empty(); }
  std::uint8_t& at(Index r, Index c, int k) { return pixels[static_cast<std::size_t>((r * cols + c) * 3 + k)]; }
  std::uint8_t at(Index r, Index c, int k) const { return pixels[static_cast<std::size_t>((r * cols + c) * 3 + k)]; }
  bool operator==(const RgbImage&) const = default;
};

/// Any 8-bit color or gray image, returned as RGB.
RgbImage read_rgb(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const RgbImage& image);

/// Single-channel image of any depth, converted to float without rescaling.
MapF read_depth(const std::filesystem::path& path);
/// 32-bit float TIFF.
void write_depth(const std::filesystem::path& path, const MapF& depth);

/// Gray rendering of a depth map: near is bright; non-finite and zero pixels are black.
RgbImage depth_to_rgb(const MapF& depth);

/// Overlay convention: jaw plates red, open sides green, center yellow.
/// The first grasp is drawn 2 px wide, the rest 1 px.
void draw_grasps(RgbImage& image, std::span<const GraspRectangle> grasps, double height_ratio = kDefaultHeightRatio);

}  // namespace hrg
