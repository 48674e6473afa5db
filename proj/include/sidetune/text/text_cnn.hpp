// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "sidetune/fusion/encoder.hpp"
#include "sidetune/nn/layers.hpp"

namespace sidetune {

struct TextEncoderConfig {
  std::vector<std::size_t> window_sizes{3, 4, 5};
  std::size_t filters_per_window = 512;
  double dropout = 0.5;
  std::size_t embedding_dim = 300;
  std::size_t max_tokens = 500;
  std::size_t num_classes = 10;  // standalone baseline head only

  std::size_t output_dim() const noexcept { return window_sizes.size() * filters_per_window; }

  void validate() const {
    if (window_sizes.empty()) fail(ErrorKind::ConfigError, "text encoder needs at least one window size");
    for (std::size_t i = 0; i < window_sizes.size(); ++i) {
      if (window_sizes[i] == 0 || window_sizes[i] > max_tokens)
        fail(ErrorKind::ConfigError, "window size " + std::to_string(window_sizes[i]) + " outside [1, max_tokens]");
      if (i > 0 && window_sizes[i] <= window_sizes[i - 1])
        fail(ErrorKind::ConfigError, "window sizes must be strictly ascending");
    }
    if (filters_per_window == 0 || embedding_dim == 0 || max_tokens == 0)
      fail(ErrorKind::ConfigError, "text encoder sizes must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::ConfigError, "dropout must be in [0, 1)");
  }
};

/// Closed-form trainable parameter count of the standalone text classifier:
/// per window h, filters x (h x k) weights plus one bias per filter, then the
/// (windows x filters) -> classes score layer.
inline std::size_t count_text_params(const TextEncoderConfig& cfg) {
  std::size_t n = 0;
  for (auto h : cfg.window_sizes) n += cfg.filters_per_window * (h * cfg.embedding_dim + 1);
  return n + cfg.output_dim() * cfg.num_classes + cfg.num_classes;
}

/// Sentence-classification CNN encoder. Input (N, max_tokens, k). Each window
/// h runs a valid stride-1 convolution of `filters` h x k kernels, ReLU and a
/// global max over positions; the pooled vectors are concatenated in
/// ascending-h order, then dropout. Output (N, windows x filters).
///
/// Parameters are named "convs.<j>.weight" (filters, 1, h, k) and
/// "convs.<j>.bias", matching a PyTorch Conv2d(1, filters, (h, k)) stack.
template <typename T>
class TextCnn final : public Encoder<T> {
 public:
  explicit TextCnn(TextEncoderConfig cfg, std::uint64_t dropout_seed = 0)
      : cfg_(std::move(cfg)), dropout_(cfg_.dropout, dropout_seed) {
    cfg_.validate();
    for (auto h : cfg_.window_sizes) {
      weights_.emplace_back(Shape{cfg_.filters_per_window, 1, h, cfg_.embedding_dim});
      biases_.emplace_back(Shape{cfg_.filters_per_window});
    }
  }

  const TextEncoderConfig& config() const noexcept { return cfg_; }
  Modality modality() const override { return Modality::Text; }
  std::size_t output_dim() const override { return cfg_.output_dim(); }
  std::string architecture() const override { return "text_cnn"; }
  nn::Dropout<T>& dropout() noexcept { return dropout_; }
  nn::Parameter<T>& conv_weight(std::size_t j) { return weights_.at(j); }
  nn::Parameter<T>& conv_bias(std::size_t j) { return biases_.at(j); }

  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode) override { return forward_traced(x, mode, nullptr); }

  /// As forward(); additionally reports the number of convolution positions per window.
  Tensor<T> forward_traced(const Tensor<T>& x, nn::Mode mode, std::vector<std::size_t>* conv_lengths) {
    if (x.rank() != 3 || x.dim(1) != cfg_.max_tokens || x.dim(2) != cfg_.embedding_dim)
      fail(ErrorKind::ShapeError, "text encoder expects (N, " + std::to_string(cfg_.max_tokens) + ", " +
                                      std::to_string(cfg_.embedding_dim) + ") input, got " + shape_string(x.shape()));
    const std::size_t n = x.dim(0), len = cfg_.max_tokens, k = cfg_.embedding_dim, f = cfg_.filters_per_window;
    const std::size_t windows = cfg_.window_sizes.size();
    Tensor<T> pooled({n, windows * f});
    std::vector<std::size_t> argmax(n * windows * f);
    RowMatrix<T> act;
    if (conv_lengths) conv_lengths->clear();
    for (std::size_t j = 0; j < windows; ++j) {
      const std::size_t h = cfg_.window_sizes[j], positions = len - h + 1;
      if (conv_lengths) conv_lengths->push_back(positions);
      auto W = as_matrix(weights_[j].value.data(), f, h * k);
      for (std::size_t b = 0; b < n; ++b) {
        // windows overlap in memory: row p covers tokens p..p+h-1
        Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>> X(
            x.data() + b * len * k, static_cast<Eigen::Index>(positions), static_cast<Eigen::Index>(h * k),
            Eigen::OuterStride<>(static_cast<Eigen::Index>(k)));
        act.noalias() = X * W.transpose();
        for (std::size_t c = 0; c < f; ++c) {
          std::size_t best_at = 0;
          T best = act(0, static_cast<Eigen::Index>(c));
          for (std::size_t p = 1; p < positions; ++p) {
            const T v = act(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(c));
            if (v > best) {
              best = v;
              best_at = p;
            }
          }
          const std::size_t o = b * windows * f + j * f + c;
          pooled[o] = std::max(best + biases_[j].value[c], T(0));
          argmax[o] = best_at;
        }
      }
    }
    auto out = dropout_.forward(pooled, mode);
    if (mode == nn::Mode::Train) {
      input_ = x;
      pooled_ = std::move(pooled);
      argmax_ = std::move(argmax);
    }
    return out;
  }

  /// Gradient flows only through each filter's max-activating position (and
  /// only when that activation is positive).
  Tensor<T> backward(const Tensor<T>& grad_output) override {
    const auto g = dropout_.backward(grad_output);
    const std::size_t n = input_.dim(0), len = cfg_.max_tokens, k = cfg_.embedding_dim, f = cfg_.filters_per_window;
    const std::size_t windows = cfg_.window_sizes.size();
    Tensor<T> dx(input_.shape());
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t j = 0; j < windows; ++j) {
        const std::size_t h = cfg_.window_sizes[j];
        for (std::size_t c = 0; c < f; ++c) {
          const std::size_t o = b * windows * f + j * f + c;
          if (pooled_[o] <= T(0) || g[o] == T(0)) continue;
          const T gv = g[o];
          const std::size_t start = argmax_[o] * k;
          const T* xw = input_.data() + b * len * k + start;
          T* dxw = dx.data() + b * len * k + start;
          T* dw = weights_[j].grad.data() + c * h * k;
          const T* w = weights_[j].value.data() + c * h * k;
          for (std::size_t i = 0; i < h * k; ++i) {
            dw[i] += gv * xw[i];
            dxw[i] += gv * w[i];
          }
          biases_[j].grad[c] += gv;
        }
      }
    return dx;
  }

  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParameter<T>>& out) override {
    for (std::size_t j = 0; j < weights_.size(); ++j) {
      const auto base = nn::join_name(prefix, "convs." + std::to_string(j));
      out.push_back({nn::join_name(base, "weight"), &weights_[j]});
      out.push_back({nn::join_name(base, "bias"), &biases_[j]});
    }
  }

  void reset_parameters(Rng& rng) override {
    for (std::size_t j = 0; j < weights_.size(); ++j) {
      const std::size_t fan_in = cfg_.window_sizes[j] * cfg_.embedding_dim;
      nn::fill_fan_in_uniform(weights_[j].value, fan_in, rng);
      nn::fill_fan_in_uniform(biases_[j].value, fan_in, rng);
    }
  }

 private:
  TextEncoderConfig cfg_;
  std::vector<nn::Parameter<T>> weights_, biases_;
  nn::Dropout<T> dropout_;
  Tensor<T> input_, pooled_;
  std::vector<std::size_t> argmax_;
};

/// Standalone text baseline: the text CNN plus a score layer ("fc").
template <typename T>
class TextClassifier final : public Classifier<T> {
 public:
  TextClassifier(const TextEncoderConfig& cfg, Rng& rng, std::uint64_t dropout_seed = 0)
      : encoder_(cfg, dropout_seed), fc_(cfg.output_dim(), cfg.num_classes) {
    encoder_.reset_parameters(rng);
    fc_.reset_parameters(rng);
  }

  TextCnn<T>& encoder() noexcept { return encoder_; }
  std::size_t num_classes() const override { return fc_.out_features(); }
  Modalities modalities() const override { return Modalities{}.add(Modality::Text); }

  Tensor<T> forward(const Batch<T>& batch, nn::Mode mode) override {
    return fc_.forward(encoder_.forward(batch.tokens, mode), mode);
  }
  void backward(const Tensor<T>& grad_scores) override { encoder_.backward(fc_.backward(grad_scores)); }

  std::vector<nn::NamedParameter<T>> parameters() override {
    std::vector<nn::NamedParameter<T>> out;
    encoder_.collect_parameters("encoder", out);
    fc_.collect_parameters("fc", out);
    return out;
  }

 private:
  TextCnn<T> encoder_;
  nn::Linear<T> fc_;
};

}  // namespace sidetune
