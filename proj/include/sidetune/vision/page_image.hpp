// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "sidetune/core/error.hpp"

namespace sidetune {

/// Single-channel page scan with intensities in [0, 1], row-major.
struct PageImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
  std::filesystem::path source;

  float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }

  void validate() const {
    if (height == 0 || width == 0) fail(ErrorKind::DegenerateImage, "zero-area image " + source.string());
    if (pixels.size() != height * width) fail(ErrorKind::DegenerateImage, "pixel buffer size mismatch");
    for (float v : pixels)
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
        fail(ErrorKind::DegenerateImage, "pixel value outside [0, 1] in " + source.string());
  }
};

/// Decodes a TIFF/PNG/JPEG scan to grayscale intensities in [0, 1]. 8- and
/// 16-bit images are scaled by their type's maximum.
inline PageImage load_page(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::IoError, "image not found: " + path.string());
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE | cv::IMREAD_ANYDEPTH);
  if (raw.empty() || raw.rows == 0 || raw.cols == 0)
    fail(ErrorKind::DegenerateImage, "cannot decode image " + path.string());
  double scale = 1.0;
  switch (raw.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    case CV_32F:
    case CV_64F: scale = 1.0; break;
    default: fail(ErrorKind::DegenerateImage, "unsupported pixel depth in " + path.string());
  }
  cv::Mat gray;
  raw.convertTo(gray, CV_32F, scale);
  PageImage page;
  page.height = static_cast<std::size_t>(gray.rows);
  page.width = static_cast<std::size_t>(gray.cols);
  page.source = path;
  page.pixels.resize(page.height * page.width);
  for (int y = 0; y < gray.rows; ++y) {
    const float* row = gray.ptr<float>(y);
    for (int x = 0; x < gray.cols; ++x)
      page.pixels[static_cast<std::size_t>(y) * page.width + static_cast<std::size_t>(x)] =
          std::min(std::max(row[x], 0.0f), 1.0f);
  }
  return page;
}

/// Writes intensities in [0, 1] as an 8-bit grayscale image (format from the extension).
inline void save_page(const PageImage& page, const std::filesystem::path& path) {
  cv::Mat out(static_cast<int>(page.height), static_cast<int>(page.width), CV_8U);
  for (std::size_t y = 0; y < page.height; ++y)
    for (std::size_t x = 0; x < page.width; ++x)
      out.at<unsigned char>(static_cast<int>(y), static_cast<int>(x)) =
          static_cast<unsigned char>(std::lround(page.at(y, x) * 255.0f));
  if (!cv::imwrite(path.string(), out)) fail(ErrorKind::IoError, "cannot write image " + path.string());
}

}  // namespace sidetune
