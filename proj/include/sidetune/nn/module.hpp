// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sidetune/core/random.hpp"
#include "sidetune/core/tensor.hpp"

namespace sidetune::nn {

enum class Mode { Train, Eval };

/// A learnable tensor plus its gradient accumulator. Buffers such as
/// batch-norm running statistics are non-trainable parameters without a gradient.
template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  explicit Parameter(Shape shape, bool is_trainable = true)
      : value(shape), grad(is_trainable ? shape : Shape{0}), trainable(is_trainable) {}
};

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
};

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// Layer interface. forward() in Mode::Train caches what backward() needs;
/// Mode::Eval never mutates the module, so concurrent evaluation is safe.
/// backward() accumulates into parameter gradients and returns the input gradient.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;

  virtual Tensor<T> forward(const Tensor<T>& input, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_output) = 0;

  virtual void collect_parameters(const std::string& /*prefix*/, std::vector<NamedParameter<T>>& /*out*/) {}
  virtual void reset_parameters(Rng& /*rng*/) {}

  std::vector<NamedParameter<T>> named_parameters(const std::string& prefix = "") {
    std::vector<NamedParameter<T>> out;
    collect_parameters(prefix, out);
    return out;
  }

  void zero_grad() {
    for (auto& np : named_parameters())
      if (np.param->trainable) np.param->grad.zero();
  }

  std::size_t num_trainable() {
    std::size_t n = 0;
    for (auto& np : named_parameters())
      if (np.param->trainable) n += np.param->value.size();
    return n;
  }
};

template <typename T>
using ModulePtr = std::unique_ptr<Module<T>>;

/// Copies every parameter and buffer from `from` into `to` by name.
template <typename T>
void copy_state(Module<T>& from, Module<T>& to) {
  auto src = from.named_parameters();
  auto dst = to.named_parameters();
  if (src.size() != dst.size())
    fail(ErrorKind::ShapeError, "copy_state: parameter count differs");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].name != dst[i].name || src[i].param->value.shape() != dst[i].param->value.shape())
      fail(ErrorKind::ShapeError, "copy_state: mismatch at " + src[i].name);
    dst[i].param->value = src[i].param->value;
  }
}

/// Symmetric uniform fan-in initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void fill_fan_in_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<T>(draw_uniform(rng, -bound, bound));
}

}  // namespace sidetune::nn
