// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "sidetune/nn/module.hpp"

namespace sidetune {

enum class Modality { Image, Text };

struct Modalities {
  bool image = false;
  bool text = false;

  Modalities& add(Modality m) {
    (m == Modality::Image ? image : text) = true;
    return *this;
  }
};

/// A network producing a fixed-width encoding from one modality:
/// (N, 3, S, S) images or (N, tokens, embedding_dim) token matrices -> (N, dim).
template <typename T>
class Encoder : public nn::Module<T> {
 public:
  virtual Modality modality() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual std::string architecture() const = 0;
};

/// Model input for a minibatch. `base_encodings` optionally carries
/// precomputed frozen-base outputs so the base forward can be skipped.
template <typename T>
struct Batch {
  Tensor<T> images;
  Tensor<T> tokens;
  std::vector<int> labels;
  Tensor<T> base_encodings;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Anything that maps a batch to class scores and can be trained by the
/// generic trainer: the fused side-tuning model or the standalone text baseline.
template <typename T>
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual Tensor<T> forward(const Batch<T>& batch, nn::Mode mode) = 0;
  virtual void backward(const Tensor<T>& grad_scores) = 0;

  /// Every serialized tensor (weights and buffers), including frozen ones.
  virtual std::vector<nn::NamedParameter<T>> parameters() = 0;
  /// Locked tensors that training must never modify.
  virtual std::vector<nn::NamedParameter<T>> frozen_parameters() { return {}; }

  virtual std::size_t num_classes() const = 0;
  virtual Modalities modalities() const = 0;
  /// Inputs consumed by the trainable part; the frozen base is excluded.
  virtual Modalities side_modalities() const { return modalities(); }

  virtual bool has_frozen_base() const { return false; }
  virtual Tensor<T> encode_base(const Tensor<T>& /*images*/) {
    fail(ErrorKind::ConfigError, "model has no frozen base");
  }

  std::vector<nn::NamedParameter<T>> trainable_parameters() {
    std::vector<nn::NamedParameter<T>> out;
    for (auto& np : parameters())
      if (np.param->trainable) out.push_back(np);
    return out;
  }

  void zero_grad() {
    for (auto& np : trainable_parameters()) np.param->grad.zero();
  }
};

}  // namespace sidetune
