// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sidetune/core/tensor.hpp"
#include "sidetune/vision/page_image.hpp"

namespace sidetune {

enum class BackboneKind { MobileNetV2, ResNet50 };

inline std::string backbone_name(BackboneKind kind) {
  return kind == BackboneKind::MobileNetV2 ? "mobilenet_v2" : "resnet50";
}

inline BackboneKind parse_backbone(const std::string& name) {
  if (name == "mobilenet_v2" || name == "mobilenetv2") return BackboneKind::MobileNetV2;
  if (name == "resnet50") return BackboneKind::ResNet50;
  fail(ErrorKind::ConfigError, "unknown backbone '" + name + "' (expected mobilenet_v2 or resnet50)");
}

/// Channel rounding used by MobileNetV2 width multipliers.
inline std::size_t make_divisible(double v, std::size_t divisor = 8) {
  const auto d = static_cast<double>(divisor);
  auto rounded = static_cast<std::size_t>(std::max(d, std::floor((v + d / 2) / d) * d));
  if (static_cast<double>(rounded) < 0.9 * v) rounded += divisor;
  return rounded;
}

inline std::size_t scaled_channels(std::size_t base, double width) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(base) * width)));
}

struct VisionConfig {
  BackboneKind backbone = BackboneKind::MobileNetV2;
  std::size_t input_side = 384;
  std::array<double, 3> channel_mean{0.0, 0.0, 0.0};
  std::array<double, 3> channel_std{1.0, 1.0, 1.0};
  /// 1.0 is the published architecture; smaller values shrink channel counts.
  double width_multiplier = 1.0;

  std::size_t feature_dim() const {
    if (backbone == BackboneKind::MobileNetV2) return make_divisible(1280.0 * std::max(1.0, width_multiplier));
    return 4 * scaled_channels(512, width_multiplier);
  }

  void validate() const {
    if (input_side < 32) fail(ErrorKind::ConfigError, "input side must be at least 32 pixels");
    if (!(width_multiplier > 0.0)) fail(ErrorKind::ConfigError, "width multiplier must be positive");
    for (double s : channel_std)
      if (!(s > 0.0) || !std::isfinite(s)) fail(ErrorKind::ConfigError, "channel std entries must be positive");
    for (double m : channel_mean)
      if (!std::isfinite(m)) fail(ErrorKind::ConfigError, "channel mean entries must be finite");
  }
};

/// Bilinear resampling with half-pixel centres and edge clamping (no
/// antialiasing). Equal sizes reproduce the input exactly.
inline std::vector<float> resize_bilinear(const PageImage& img, std::size_t out_h, std::size_t out_w) {
  std::vector<float> out(out_h * out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  auto coord = [](std::size_t o, double scale, std::size_t extent, std::size_t& i0, std::size_t& i1, double& frac) {
    const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * scale - 0.5);
    i0 = std::min(static_cast<std::size_t>(src), extent - 1);
    i1 = std::min(i0 + 1, extent - 1);
    frac = src - static_cast<double>(i0);
  };
  std::vector<std::size_t> x0(out_w), x1(out_w);
  std::vector<double> fx(out_w);
  for (std::size_t x = 0; x < out_w; ++x) coord(x, sx, img.width, x0[x], x1[x], fx[x]);
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double fy;
    coord(y, sy, img.height, y0, y1, fy);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double top = img.at(y0, x0[x]) * (1 - fx[x]) + img.at(y0, x1[x]) * fx[x];
      const double bottom = img.at(y1, x0[x]) * (1 - fx[x]) + img.at(y1, x1[x]) * fx[x];
      out[y * out_w + x] = static_cast<float>(top * (1 - fy) + bottom * fy);
    }
  }
  return out;
}

/// Resize to side x side and replicate the gray channel into 3 identical
/// channels, without standardization.
template <typename T>
Tensor<T> resize_and_replicate(const PageImage& img, std::size_t side) {
  img.validate();
  const auto plane = resize_bilinear(img, side, side);
  Tensor<T> out({3, side, side});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane.size(); ++i) out[c * plane.size() + i] = static_cast<T>(plane[i]);
  return out;
}

/// Page -> (3, side, side) network input: bilinear resize, channel
/// replication, then per-channel (x - mean) / std.
template <typename T>
Tensor<T> preprocess(const PageImage& img, const VisionConfig& cfg) {
  auto out = resize_and_replicate<T>(img, cfg.input_side);
  const std::size_t plane = cfg.input_side * cfg.input_side;
  for (std::size_t c = 0; c < 3; ++c) {
    const auto mean = static_cast<T>(cfg.channel_mean[c]);
    const auto inv = static_cast<T>(1.0 / cfg.channel_std[c]);
    T* p = out.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv;
  }
  return out;
}

struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> std{};
};

/// Running per-channel pixel statistics over resized, replicated pages.
class ChannelStatsAccumulator {
 public:
  template <typename T>
  void add(const Tensor<T>& replicated) {
    const std::size_t plane = replicated.size() / 3;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = replicated[c * plane + i];
        sum_[c] += v;
        sq_[c] += v * v;
      }
    count_ += plane;
  }

  void merge(const ChannelStatsAccumulator& o) {
    for (std::size_t c = 0; c < 3; ++c) {
      sum_[c] += o.sum_[c];
      sq_[c] += o.sq_[c];
    }
    count_ += o.count_;
  }

  ChannelStats finish() const {
    if (count_ == 0) fail(ErrorKind::EmptyCorpus, "no images to compute channel statistics");
    ChannelStats s;
    for (std::size_t c = 0; c < 3; ++c) {
      const double n = static_cast<double>(count_);
      s.mean[c] = sum_[c] / n;
      const double var = std::max(0.0, sq_[c] / n - s.mean[c] * s.mean[c]);
      s.std[c] = var > 0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

 private:
  std::array<double, 3> sum_{}, sq_{};
  std::size_t count_ = 0;
};

}  // namespace sidetune
