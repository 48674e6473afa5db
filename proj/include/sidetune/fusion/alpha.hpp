// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sidetune/core/error.hpp"

namespace sidetune {

/// Fixed blend coefficients for the base encoding (index 0) and each side
/// encoding (indices 1..N). Only obtainable through validate_alphas().
class AlphaConfig {
 public:
  static constexpr double kSumTolerance = 1e-6;

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t num_sides() const noexcept { return values_.size() - 1; }
  double operator[](std::size_t i) const { return values_.at(i); }

  std::string to_string() const {
    std::string out = "[";
    for (std::size_t i = 0; i < values_.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.10g", values_[i]);
      out += (i ? ", " : "");
      out += buf;
    }
    return out + "]";
  }

  bool operator==(const AlphaConfig&) const = default;

 private:
  explicit AlphaConfig(std::vector<double> values) : values_(std::move(values)) {}
  friend AlphaConfig validate_alphas(std::span<const double>);

  std::vector<double> values_;
};

/// Accepts the coefficients unchanged when all are non-negative and they sum
/// to one within AlphaConfig::kSumTolerance. Near-valid lists are rejected,
/// never renormalized.
inline AlphaConfig validate_alphas(std::span<const double> alphas) {
  if (alphas.empty()) fail(ErrorKind::EmptyConfig, "alpha configuration is empty");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!std::isfinite(alphas[i]))
      fail(ErrorKind::ConstraintViolation, "alpha[" + std::to_string(i) + "] is not finite");
    if (alphas[i] < 0.0)
      fail(ErrorKind::NegativeCoefficient, "alpha[" + std::to_string(i) + "] = " + std::to_string(alphas[i]) + " < 0");
  }
  const double sum = std::accumulate(alphas.begin(), alphas.end(), 0.0);
  if (std::abs(sum - 1.0) > AlphaConfig::kSumTolerance)
    fail(ErrorKind::ConstraintViolation, "alpha coefficients sum to " + std::to_string(sum) + ", expected 1");
  return AlphaConfig(std::vector<double>(alphas.begin(), alphas.end()));
}

inline AlphaConfig validate_alphas(std::initializer_list<double> alphas) {
  return validate_alphas(std::span<const double>(alphas.begin(), alphas.size()));
}

}  // namespace sidetune
