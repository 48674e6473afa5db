// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "sidetune/core/error.hpp"

namespace sidetune {

/// Printed: base_lr * sqrt(e / max), rising from 0.
/// Inverted: base_lr * sqrt(1 - e / max), decaying from base_lr.
enum class Schedule { Printed, Inverted };

inline std::string schedule_name(Schedule s) { return s == Schedule::Printed ? "printed" : "inverted"; }

inline Schedule parse_schedule(const std::string& name) {
  if (name == "printed") return Schedule::Printed;
  if (name == "inverted") return Schedule::Inverted;
  fail(ErrorKind::ConfigError, "unknown schedule '" + name + "' (expected printed or inverted)");
}

struct TrainConfig {
  std::size_t max_epochs = 100;
  std::size_t batch_size = 16;
  double momentum = 0.9;
  double base_lr = 0.1;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;
  Schedule schedule = Schedule::Printed;
  /// Keep frozen-base encodings of every sample after their first forward.
  bool cache_base_features = true;
  /// Data-loading threads.
  std::size_t workers = 1;

  void validate() const {
    if (max_epochs < 1) fail(ErrorKind::ConfigError, "max_epochs must be at least 1");
    if (batch_size < 1) fail(ErrorKind::ConfigError, "batch_size must be at least 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorKind::ConfigError, "momentum must be in [0, 1)");
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) fail(ErrorKind::ConfigError, "base_lr must be positive");
  }
};

/// Learning rate at a (possibly fractional) epoch in [0, max_epochs].
inline double lr_at(double epoch, const TrainConfig& cfg) {
  const auto max = static_cast<double>(cfg.max_epochs);
  if (!std::isfinite(epoch) || epoch < 0.0 || epoch > max)
    fail(ErrorKind::OutOfRange, "epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.max_epochs) + "]");
  const double ratio = epoch / max;
  return cfg.base_lr * std::sqrt(cfg.schedule == Schedule::Printed ? ratio : 1.0 - ratio);
}

}  // namespace sidetune
