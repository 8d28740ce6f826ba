#include "hrg/image.hpp"

#include "hrg/geometry.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hrg {

namespace {

cv::Mat to_bgr(const RgbImage& image) {
  cv::Mat m(static_cast<int>(image.rows), static_cast<int>(image.cols), CV_8UC3);
  for (Index r = 0; r < image.rows; ++r) {
    auto* row = m.ptr<cv::Vec3b>(static_cast<int>(r));
    for (Index c = 0; c < image.cols; ++c) row[c] = cv::Vec3b(image.at(r, c, 2), image.at(r, c, 1), image.at(r, c, 0));
  }
  return m;
}

void check_written(bool ok, const std::filesystem::path& path) {
  if (!ok) throw std::runtime_error("cannot write image " + path.string());
}

}  // namespace

RgbImage read_rgb(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw std::runtime_error("cannot read image " + path.string());
  RgbImage out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    const auto* row = m.ptr<cv::Vec3b>(r);
    for (int c = 0; c < m.cols; ++c) {
      out.at(r, c, 0) = row[c][2];
      out.at(r, c, 1) = row[c][1];
      out.at(r, c, 2) = row[c][0];
    }
  }
  return out;
}

void write_rgb(const std::filesystem::path& path, const RgbImage& image) {
  check_written(cv::imwrite(path.string(), to_bgr(image)), path);
}

MapF read_depth(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("cannot read depth image " + path.string());
  cv::Mat f;
  m.convertTo(f, CV_32F);
  MapF out(f.rows, f.cols);
  for (int r = 0; r < f.rows; ++r) {
    const float* row = f.ptr<float>(r);
    for (int c = 0; c < f.cols; ++c) out(r, c) = row[c];
  }
  return out;
}

void write_depth(const std::filesystem::path& path, const MapF& depth) {
  cv::Mat m(static_cast<int>(depth.rows()), static_cast<int>(depth.cols()), CV_32F);
  for (int r = 0; r < m.rows; ++r) {
    float* row = m.ptr<float>(r);
    for (int c = 0; c < m.cols; ++c) row[c] = depth(r, c);
  }
  check_written(cv::imwrite(path.string(), m), path);
}

RgbImage depth_to_rgb(const MapF& depth) {
  float lo = std::numeric_limits<float>::infinity(), hi = -lo;
  for (Index i = 0; i < depth.size(); ++i) {
    const float v = depth.data()[i];
    if (std::isfinite(v) && v > 0) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  RgbImage out(depth.rows(), depth.cols());
  const float span = hi > lo ? hi - lo : 1.0f;
  for (Index r = 0; r < depth.rows(); ++r) {
    for (Index c = 0; c < depth.cols(); ++c) {
      const float v = depth(r, c);
      std::uint8_t g = 0;
      if (std::isfinite(v) && v > 0) g = static_cast<std::uint8_t>(std::lround(55 + 200 * (hi - v) / span));
      for (int k = 0; k < 3; ++k) out.at(r, c, k) = g;
    }
  }
  return out;
}

void draw_grasps(RgbImage& image, std::span<const GraspRectangle> grasps, double height_ratio) {
  cv::Mat m = to_bgr(image);
  const cv::Scalar red(0, 0, 255), green(0, 200, 0), yellow(0, 255, 255);
  for (std::size_t i = 0; i < grasps.size(); ++i) {
    const Polygon p = rect_polygon(grasps[i], height_ratio);
    std::vector<cv::Point> pts;
    for (const auto& v : p) pts.emplace_back(static_cast<int>(std::lround(v.x())), static_cast<int>(std::lround(v.y())));
    const int thickness = i == 0 ? 2 : 1;
    // Edges 0-1 and 2-3 run along the jaw travel; 1-2 and 3-0 are the plates.
    cv::line(m, pts[0], pts[1], green, thickness, cv::LINE_AA);
    cv::line(m, pts[2], pts[3], green, thickness, cv::LINE_AA);
    cv::line(m, pts[1], pts[2], red, thickness, cv::LINE_AA);
    cv::line(m, pts[3], pts[0], red, thickness, cv::LINE_AA);
    cv::circle(m, cv::Point(static_cast<int>(std::lround(grasps[i].x)), static_cast<int>(std::lround(grasps[i].y))), 2,
               yellow, cv::FILLED);
  }
  for (Index r = 0; r < image.rows; ++r) {
    const auto* row = m.ptr<cv::Vec3b>(static_cast<int>(r));
    for (Index c = 0; c < image.cols; ++c) {
      image.at(r, c, 0) = row[c][2];
      image.at(r, c, 1) = row[c][1];
      image.at(r, c, 2) = row[c][0];
    }
  }
}

}  // namespace hrg
