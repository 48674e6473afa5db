// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sidetune/fusion/encoder.hpp"
#include "sidetune/nn/archive.hpp"
#include "sidetune/nn/layers.hpp"
#include "sidetune/vision/preprocess.hpp"

namespace sidetune {

namespace vision_detail {

/// conv -> batch norm [-> activation], children named "0", "1", "2".
template <typename T>
std::unique_ptr<nn::Sequential<T>> conv_bn(nn::Conv2dOptions opt, bool relu6_activation, bool activation = true) {
  auto block = std::make_unique<nn::Sequential<T>>();
  block->template emplace<nn::Conv2d<T>>("0", opt);
  block->template emplace<nn::BatchNorm2d<T>>("1", opt.out_channels);
  if (activation) block->add("2", relu6_activation ? nn::make_relu6<T>() : nn::make_relu<T>());
  return block;
}

}  // namespace vision_detail

/// MobileNetV2 inverted residual block; parameters live under "<prefix>.conv".
template <typename T>
class InvertedResidual final : public nn::Module<T> {
 public:
  InvertedResidual(std::size_t in, std::size_t out, std::size_t stride, std::size_t expand_ratio)
      : use_residual_(stride == 1 && in == out) {
    const std::size_t hidden = static_cast<std::size_t>(std::lround(static_cast<double>(in * expand_ratio)));
    std::size_t idx = 0;
    if (expand_ratio != 1)
      conv_.add(std::to_string(idx++), vision_detail::conv_bn<T>({in, hidden, 1, 1, 0, 1, false}, true));
    conv_.add(std::to_string(idx++), vision_detail::conv_bn<T>({hidden, hidden, 3, stride, 1, hidden, false}, true));
    conv_.template emplace<nn::Conv2d<T>>(std::to_string(idx++), nn::Conv2dOptions{hidden, out, 1, 1, 0, 1, false});
    conv_.template emplace<nn::BatchNorm2d<T>>(std::to_string(idx++), out);
  }

  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode) override {
    auto y = conv_.forward(x, mode);
    if (use_residual_) y += x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    auto d = conv_.backward(g);
    if (use_residual_) d += g;
    return d;
  }

  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParameter<T>>& out) override {
    conv_.collect_parameters(nn::join_name(prefix, "conv"), out);
  }
  void reset_parameters(Rng& rng) override { conv_.reset_parameters(rng); }

 private:
  bool use_residual_;
  nn::Sequential<T> conv_;
};

/// ResNet bottleneck (1x1, 3x3 with stride, 1x1 expansion x4) with the
/// torchvision parameter layout: conv1/bn1 .. conv3/bn3, downsample.{0,1}.
template <typename T>
class Bottleneck final : public nn::Module<T> {
 public:
  Bottleneck(std::size_t in, std::size_t planes, std::size_t stride, bool downsample) {
    const std::size_t out = planes * 4;
    main_.template emplace<nn::Conv2d<T>>("conv1", nn::Conv2dOptions{in, planes, 1, 1, 0, 1, false});
    main_.template emplace<nn::BatchNorm2d<T>>("bn1", planes);
    main_.add("relu1", nn::make_relu<T>());
    main_.template emplace<nn::Conv2d<T>>("conv2", nn::Conv2dOptions{planes, planes, 3, stride, 1, 1, false});
    main_.template emplace<nn::BatchNorm2d<T>>("bn2", planes);
    main_.add("relu2", nn::make_relu<T>());
    main_.template emplace<nn::Conv2d<T>>("conv3", nn::Conv2dOptions{planes, out, 1, 1, 0, 1, false});
    main_.template emplace<nn::BatchNorm2d<T>>("bn3", out);
    if (downsample) {
      downsample_ = std::make_unique<nn::Sequential<T>>();
      downsample_->template emplace<nn::Conv2d<T>>("0", nn::Conv2dOptions{in, out, 1, stride, 0, 1, false});
      downsample_->template emplace<nn::BatchNorm2d<T>>("1", out);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode) override {
    auto y = main_.forward(x, mode);
    y += downsample_ ? downsample_->forward(x, mode) : x;
    return out_act_.forward(y, mode);
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    const auto d = out_act_.backward(g);
    auto dx = main_.backward(d);
    dx += downsample_ ? downsample_->backward(d) : d;
    return dx;
  }

  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParameter<T>>& out) override {
    main_.collect_parameters(prefix, out);
    if (downsample_) downsample_->collect_parameters(nn::join_name(prefix, "downsample"), out);
  }
  void reset_parameters(Rng& rng) override {
    main_.reset_parameters(rng);
    if (downsample_) downsample_->reset_parameters(rng);
  }

 private:
  nn::Sequential<T> main_;
  std::unique_ptr<nn::Sequential<T>> downsample_;
  nn::Clamp<T> out_act_;
};

/// Image backbone without its classification layer: convolutional body
/// followed by global average pooling, producing the penultimate features.
/// Parameter names follow torchvision so published state dicts load directly.
template <typename T>
class ImageEncoder final : public Encoder<T> {
 public:
  ImageEncoder(BackboneKind kind, std::unique_ptr<nn::Sequential<T>> body, std::size_t dim)
      : kind_(kind), body_(std::move(body)), dim_(dim) {}

  Modality modality() const override { return Modality::Image; }
  std::size_t output_dim() const override { return dim_; }
  std::string architecture() const override { return backbone_name(kind_); }
  BackboneKind kind() const noexcept { return kind_; }

  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode) override {
    if (x.rank() != 4 || x.dim(1) != 3)
      fail(ErrorKind::ShapeError, "image encoder expects (N, 3, H, W) input, got " + shape_string(x.shape()));
    return pool_.forward(body_->forward(x, mode), mode);
  }

  Tensor<T> backward(const Tensor<T>& g) override { return body_->backward(pool_.backward(g)); }

  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParameter<T>>& out) override {
    body_->collect_parameters(prefix, out);
  }
  void reset_parameters(Rng& rng) override { body_->reset_parameters(rng); }

 private:
  BackboneKind kind_;
  std::unique_ptr<nn::Sequential<T>> body_;
  nn::GlobalAvgPool<T> pool_;
  std::size_t dim_;
};

template <typename T>
std::unique_ptr<ImageEncoder<T>> make_mobilenet_v2(double width = 1.0) {
  struct Stage {
    std::size_t expand, channels, repeats, stride;
  };
  static constexpr std::array<Stage, 7> stages{{
      {1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2}, {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1},
  }};
  auto body = std::make_unique<nn::Sequential<T>>();
  auto& features = body->template emplace<nn::Sequential<T>>("features");
  std::size_t in = make_divisible(32.0 * width);
  const std::size_t last = make_divisible(1280.0 * std::max(1.0, width));
  std::size_t idx = 0;
  features.add(std::to_string(idx++), vision_detail::conv_bn<T>({3, in, 3, 2, 1, 1, false}, true));
  for (const auto& s : stages) {
    const std::size_t out = make_divisible(static_cast<double>(s.channels) * width);
    for (std::size_t r = 0; r < s.repeats; ++r) {
      features.template emplace<InvertedResidual<T>>(std::to_string(idx++), in, out, r == 0 ? s.stride : 1, s.expand);
      in = out;
    }
  }
  features.add(std::to_string(idx++), vision_detail::conv_bn<T>({in, last, 1, 1, 0, 1, false}, true));
  return std::make_unique<ImageEncoder<T>>(BackboneKind::MobileNetV2, std::move(body), last);
}

template <typename T>
std::unique_ptr<ImageEncoder<T>> make_resnet50(double width = 1.0) {
  static constexpr std::array<std::size_t, 4> blocks{3, 4, 6, 3};
  static constexpr std::array<std::size_t, 4> planes_base{64, 128, 256, 512};
  auto body = std::make_unique<nn::Sequential<T>>();
  std::size_t in = scaled_channels(64, width);
  body->template emplace<nn::Conv2d<T>>("conv1", nn::Conv2dOptions{3, in, 7, 2, 3, 1, false});
  body->template emplace<nn::BatchNorm2d<T>>("bn1", in);
  body->add("relu", nn::make_relu<T>());
  body->template emplace<nn::MaxPool2d<T>>("maxpool", 3, 2, 1);
  for (std::size_t layer = 0; layer < 4; ++layer) {
    auto& stage = body->template emplace<nn::Sequential<T>>("layer" + std::to_string(layer + 1));
    const std::size_t planes = scaled_channels(planes_base[layer], width);
    for (std::size_t b = 0; b < blocks[layer]; ++b) {
      const std::size_t stride = (b == 0 && layer > 0) ? 2 : 1;
      const bool downsample = b == 0 && (stride != 1 || in != planes * 4);
      stage.template emplace<Bottleneck<T>>(std::to_string(b), in, planes, stride, downsample);
      in = planes * 4;
    }
  }
  return std::make_unique<ImageEncoder<T>>(BackboneKind::ResNet50, std::move(body), in);
}

template <typename T>
std::unique_ptr<ImageEncoder<T>> make_backbone(const VisionConfig& cfg) {
  return cfg.backbone == BackboneKind::MobileNetV2 ? make_mobilenet_v2<T>(cfg.width_multiplier)
                                                   : make_resnet50<T>(cfg.width_multiplier);
}

/// Base and side image networks: same architecture, same initial weights.
/// The side stays trainable; the base is locked once handed to a FusedEncoder.
template <typename T>
struct BackbonePair {
  std::unique_ptr<ImageEncoder<T>> base;
  std::unique_ptr<ImageEncoder<T>> side;
};

/// Builds the pair from a pre-trained archive (torchvision names) when given,
/// otherwise from a seeded random initialization.
template <typename T>
BackbonePair<T> make_backbone_pair(const VisionConfig& cfg, const nn::Archive* pretrained, Rng& rng) {
  cfg.validate();
  BackbonePair<T> pair{make_backbone<T>(cfg), make_backbone<T>(cfg)};
  if (pretrained) {
    nn::load_parameters(pair.side->named_parameters(), *pretrained);
  } else {
    pair.side->reset_parameters(rng);
  }
  nn::copy_state<T>(*pair.side, *pair.base);
  return pair;
}

}  // namespace sidetune
