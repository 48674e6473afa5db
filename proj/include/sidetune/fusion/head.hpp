// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sidetune/nn/layers.hpp"

namespace sidetune {

/// Affine map bringing a side encoding (e.g. 1536-d text features) to the
/// width of the image encodings it is blended with. Purely affine, no activation.
template <typename T>
class AdaptationLayer final : public nn::Module<T> {
 public:
  AdaptationLayer(std::size_t in_dim, std::size_t out_dim) : linear_(in_dim, out_dim) {}

  std::size_t in_dim() const noexcept { return linear_.in_features(); }
  std::size_t out_dim() const noexcept { return linear_.out_features(); }
  nn::Linear<T>& linear() noexcept { return linear_; }

  /// Accepts a single encoding (dim) or a batch (N, dim).
  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode) override {
    if (x.rank() == 0 || x.shape().back() != in_dim())
      fail(ErrorKind::DimensionMismatch, "adaptation layer expects " + std::to_string(in_dim()) +
                                             "-d input, got " + shape_string(x.shape()));
    if (x.rank() == 1) {
      auto y = linear_.forward(x.reshaped({1, in_dim()}), mode);
      y.reshape({out_dim()});
      return y;
    }
    return linear_.forward(x, mode);
  }

  Tensor<T> backward(const Tensor<T>& g) override { return linear_.backward(g); }

  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParameter<T>>& out) override {
    linear_.collect_parameters(prefix, out);
  }
  void reset_parameters(Rng& rng) override { linear_.reset_parameters(rng); }

 private:
  nn::Linear<T> linear_;
};

/// fc widths accepted between fusion and classification.
inline void validate_fc_width(std::optional<std::size_t> width) {
  if (width && *width != 512 && *width != 1024)
    fail(ErrorKind::InvalidWidth, "fc width " + std::to_string(*width) + " is not one of none, 512, 1024");
}

/// Optional fully connected layer (affine + ReLU) followed by the affine
/// class-score layer. Outputs raw scores; normalization lives in the loss.
template <typename T>
class ClassifierHead final : public nn::Module<T> {
 public:
  ClassifierHead(std::size_t in_dim, std::optional<std::size_t> fc_width, std::size_t num_classes)
      : in_dim_(in_dim), fc_width_(fc_width) {
    validate_fc_width(fc_width);
    if (num_classes == 0) fail(ErrorKind::ConfigError, "number of classes must be positive");
    if (fc_width) fc_.emplace(in_dim, *fc_width);
    head_.emplace(fc_width ? *fc_width : in_dim, num_classes);
  }

  std::size_t in_dim() const noexcept { return in_dim_; }
  std::optional<std::size_t> fc_width() const noexcept { return fc_width_; }
  std::size_t num_classes() const noexcept { return head_->out_features(); }
  nn::Linear<T>& score_layer() noexcept { return *head_; }
  nn::Linear<T>* fc_layer() noexcept { return fc_ ? &*fc_ : nullptr; }

  Tensor<T> forward(const Tensor<T>& fused, nn::Mode mode) override {
    if (fused.rank() != 2 || fused.dim(1) != in_dim_)
      fail(ErrorKind::DimensionMismatch, "classifier expects (N, " + std::to_string(in_dim_) + ") input, got " +
                                             shape_string(fused.shape()));
    if (!fc_) return head_->forward(fused, mode);
    return head_->forward(act_.forward(fc_->forward(fused, mode), mode), mode);
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    auto d = head_->backward(g);
    if (fc_) d = fc_->backward(act_.backward(d));
    return d;
  }

  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParameter<T>>& out) override {
    if (fc_) fc_->collect_parameters(nn::join_name(prefix, "fc"), out);
    head_->collect_parameters(nn::join_name(prefix, "head"), out);
  }

  void reset_parameters(Rng& rng) override {
    if (fc_) fc_->reset_parameters(rng);
    head_->reset_parameters(rng);
  }

 private:
  std::size_t in_dim_;
  std::optional<std::size_t> fc_width_;
  std::optional<nn::Linear<T>> fc_;
  nn::Clamp<T> act_;
  std::optional<nn::Linear<T>> head_;
};

/// Index of the largest score; ties resolve to the lowest index.
template <typename T>
int argmax(std::span<const T> scores) {
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

/// Per-row argmax of an (N, C) score batch.
template <typename T>
std::vector<int> predict_classes(const Tensor<T>& scores) {
  std::vector<int> out(scores.dim(0));
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = argmax(scores.row(n));
  return out;
}

}  // namespace sidetune
