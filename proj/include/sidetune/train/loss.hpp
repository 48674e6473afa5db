// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sidetune/core/tensor.hpp"

namespace sidetune {

template <typename T>
struct LossResult {
  double loss = 0.0;
  /// d loss / d scores, same shape as the scores.
  Tensor<T> grad;
};

/// Mean softmax cross-entropy over the batch for (N, C) raw scores.
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& scores, std::span<const int> labels) {
  if (scores.rank() != 2 || scores.dim(0) != labels.size())
    fail(ErrorKind::DimensionMismatch, "cross_entropy: scores " + shape_string(scores.shape()) + " for " +
                                           std::to_string(labels.size()) + " labels");
  const std::size_t n = scores.dim(0), c = scores.dim(1);
  LossResult<T> r;
  r.grad = Tensor<T>(scores.shape());
  if (n == 0) return r;
  std::vector<double> p(c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = scores.row(i);
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      fail(ErrorKind::OutOfRange, "label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += p[k] = std::exp(static_cast<double>(row[k]) - m);
    r.loss += std::log(z) + m - static_cast<double>(row[static_cast<std::size_t>(y)]);
    for (std::size_t k = 0; k < c; ++k) {
      const double target = static_cast<std::size_t>(y) == k ? 1.0 : 0.0;
      r.grad[i * c + k] = static_cast<T>((p[k] / z - target) / static_cast<double>(n));
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

}  // namespace sidetune
