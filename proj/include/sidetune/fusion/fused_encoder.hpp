// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sidetune/fusion/combine.hpp"
#include "sidetune/fusion/encoder.hpp"
#include "sidetune/fusion/head.hpp"

namespace sidetune {

/// Side-tuning model: a locked base encoder, trainable side encoders (each
/// followed by an adaptation layer when its width differs from the base),
/// the alpha-weighted merge and the classifier head.
///
/// Parameter names: "base.*", "sides.<i>.encoder.*", "sides.<i>.adapt.*",
/// "fc.*", "head.*".
template <typename T>
class FusedEncoder final : public Classifier<T> {
 public:
  struct Side {
    std::unique_ptr<Encoder<T>> encoder;
    std::unique_ptr<AdaptationLayer<T>> adapt;
  };

  FusedEncoder(std::unique_ptr<Encoder<T>> base, std::vector<std::unique_ptr<Encoder<T>>> sides, AlphaConfig alpha,
               std::optional<std::size_t> fc_width, std::size_t num_classes, Rng& rng)
      : base_(std::move(base)), alpha_(std::move(alpha)), head_(base_->output_dim(), fc_width, num_classes) {
    if (alpha_.size() != sides.size() + 1)
      fail(ErrorKind::ArityMismatch, "alpha has " + std::to_string(alpha_.size()) + " coefficients for 1 base and " +
                                         std::to_string(sides.size()) + " sides");
    if (base_->modality() != Modality::Image) fail(ErrorKind::ConfigError, "base encoder must consume images");
    const std::size_t dim = base_->output_dim();
    for (auto& enc : sides) {
      Side side{std::move(enc), nullptr};
      if (side.encoder->output_dim() != dim) {
        side.adapt = std::make_unique<AdaptationLayer<T>>(side.encoder->output_dim(), dim);
        side.adapt->reset_parameters(rng);
      }
      sides_.push_back(std::move(side));
    }
    head_.reset_parameters(rng);
    for (auto& np : base_->named_parameters()) {
      np.param->trainable = false;
      np.param->grad = Tensor<T>();
    }
  }

  const AlphaConfig& alpha() const noexcept { return alpha_; }
  std::size_t encoding_dim() const noexcept { return base_->output_dim(); }
  std::size_t num_sides() const noexcept { return sides_.size(); }
  Encoder<T>& base() noexcept { return *base_; }
  Side& side(std::size_t i) { return sides_.at(i); }
  ClassifierHead<T>& head() noexcept { return head_; }

  std::size_t num_classes() const override { return head_.num_classes(); }

  Modalities modalities() const override {
    Modalities m;
    m.add(Modality::Image);
    for (const auto& s : sides_) m.add(s.encoder->modality());
    return m;
  }

  Modalities side_modalities() const override {
    Modalities m;
    for (const auto& s : sides_) m.add(s.encoder->modality());
    return m;
  }

  bool has_frozen_base() const override { return true; }

  /// B(x). The base always runs with inference-mode normalization and never
  /// records anything for backward.
  Tensor<T> encode_base(const Tensor<T>& images) override { return base_->forward(images, nn::Mode::Eval); }

  /// S_i(x), adapted to the base width when needed.
  Tensor<T> encode_side(std::size_t i, const Batch<T>& batch, nn::Mode mode) {
    auto& s = sides_.at(i);
    const auto& input = s.encoder->modality() == Modality::Image ? batch.images : batch.tokens;
    auto e = s.encoder->forward(input, mode);
    return s.adapt ? s.adapt->forward(e, mode) : e;
  }

  Tensor<T> fuse_and_classify(const std::vector<Tensor<T>>& encodings, nn::Mode mode) {
    return head_.forward(combine(encodings, alpha_), mode);
  }

  Tensor<T> forward(const Batch<T>& batch, nn::Mode mode) override {
    std::vector<Tensor<T>> encodings;
    encodings.reserve(sides_.size() + 1);
    encodings.push_back(batch.base_encodings.empty() ? encode_base(batch.images) : batch.base_encodings);
    for (std::size_t i = 0; i < sides_.size(); ++i) encodings.push_back(encode_side(i, batch, mode));
    return fuse_and_classify(encodings, mode);
  }

  void backward(const Tensor<T>& grad_scores) override {
    const auto grad_fused = head_.backward(grad_scores);
    const auto grads = combine_backward(grad_fused, alpha_);
    for (std::size_t i = 0; i < sides_.size(); ++i) {
      // a zero coefficient yields an exactly zero gradient; nothing to propagate
      if (alpha_[i + 1] == 0.0) continue;
      auto g = grads[i + 1];
      if (sides_[i].adapt) g = sides_[i].adapt->backward(g);
      sides_[i].encoder->backward(g);
    }
  }

  std::vector<nn::NamedParameter<T>> parameters() override {
    std::vector<nn::NamedParameter<T>> out;
    base_->collect_parameters("base", out);
    collect_trainable_components(out);
    return out;
  }

  std::vector<nn::NamedParameter<T>> frozen_parameters() override { return base_->named_parameters("base"); }

 private:
  void collect_trainable_components(std::vector<nn::NamedParameter<T>>& out) {
    for (std::size_t i = 0; i < sides_.size(); ++i) {
      const std::string prefix = "sides." + std::to_string(i);
      sides_[i].encoder->collect_parameters(nn::join_name(prefix, "encoder"), out);
      if (sides_[i].adapt) sides_[i].adapt->collect_parameters(nn::join_name(prefix, "adapt"), out);
    }
    head_.collect_parameters("", out);
  }

  std::unique_ptr<Encoder<T>> base_;
  std::vector<Side> sides_;
  AlphaConfig alpha_;
  ClassifierHead<T> head_;
};

}  // namespace sidetune
