// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "sidetune/core/tensor.hpp"
#include "sidetune/fusion/alpha.hpp"

namespace sidetune {

/// Alpha-weighted sum R = a0*B + sum_i a_i*S_i over equally shaped encodings
/// (single vectors or (N, dim) batches). Terms with a zero coefficient are
/// skipped, so a one-hot alpha returns the selected encoding bit for bit.
template <typename T>
Tensor<T> combine(std::span<const Tensor<T>> encodings, const AlphaConfig& alpha) {
  if (encodings.size() != alpha.size())
    fail(ErrorKind::ArityMismatch, "combine: " + std::to_string(encodings.size()) + " encodings for " +
                                       std::to_string(alpha.size()) + " coefficients");
  for (const auto& e : encodings) e.require_same_shape(encodings.front(), "combine");

  Tensor<T> out(encodings.front().shape());
  bool first = true;
  for (std::size_t i = 0; i < encodings.size(); ++i) {
    const T a = static_cast<T>(alpha[i]);
    if (a == T(0)) continue;
    const T* src = encodings[i].data();
    T* dst = out.data();
    if (first) {
      for (std::size_t j = 0; j < out.size(); ++j) dst[j] = a * src[j];
      first = false;
    } else {
      for (std::size_t j = 0; j < out.size(); ++j) dst[j] += a * src[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> combine(const std::vector<Tensor<T>>& encodings, const AlphaConfig& alpha) {
  return combine(std::span<const Tensor<T>>(encodings), alpha);
}

/// Gradient of combine w.r.t. each input: dR/dE_i = a_i * I.
template <typename T>
std::vector<Tensor<T>> combine_backward(const Tensor<T>& grad_output, const AlphaConfig& alpha) {
  std::vector<Tensor<T>> grads;
  grads.reserve(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    Tensor<T> g = grad_output;
    g *= static_cast<T>(alpha[i]);
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace sidetune
