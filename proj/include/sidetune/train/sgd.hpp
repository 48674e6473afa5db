// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "sidetune/nn/module.hpp"

namespace sidetune {

/// SGD with momentum: v <- momentum * v + grad; w <- w - lr * v.
/// Only parameters flagged trainable are touched.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(std::vector<nn::NamedParameter<T>> params, double momentum) : momentum_(momentum) {
    for (auto& np : params) {
      if (!np.param->trainable) continue;
      params_.push_back(np.param);
      velocity_.emplace_back(np.param->value.shape());
    }
  }

  void step(double lr) {
    const auto m = static_cast<T>(momentum_);
    const auto rate = static_cast<T>(lr);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      auto& v = velocity_[i];
      p.value.require_same_shape(p.grad, "sgd step");
      T* w = p.value.data();
      T* vel = v.data();
      const T* g = p.grad.data();
      for (std::size_t k = 0; k < v.size(); ++k) {
        vel[k] = m * vel[k] + g[k];
        w[k] -= rate * vel[k];
      }
    }
  }

  void reset() {
    for (auto& v : velocity_) v.zero();
  }

  const std::vector<Tensor<T>>& velocity() const noexcept { return velocity_; }
  std::size_t num_parameters() const noexcept { return params_.size(); }

 private:
  double momentum_;
  std::vector<nn::Parameter<T>*> params_;
  std::vector<Tensor<T>> velocity_;
};

}  // namespace sidetune
