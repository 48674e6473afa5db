// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sidetune/core/parallel.hpp"
#include "sidetune/fusion/alpha.hpp"
#include "sidetune/fusion/head.hpp"
#include "sidetune/train/metrics.hpp"
#include "sidetune/vision/preprocess.hpp"

namespace sidetune {

/// The twelve (base, image side, text side) coefficient triples with every
/// coefficient in {0.2, 0.3, 0.4, 0.5}, ordered by nondecreasing text weight.
inline std::vector<std::vector<double>> default_alpha_grid() {
  std::vector<std::vector<double>> grid;
  for (int a2 = 2; a2 <= 5; ++a2)
    for (int a0 = 2; a0 <= 5; ++a0) {
      const int a1 = 10 - a0 - a2;
      if (a1 >= 2 && a1 <= 5) grid.push_back({a0 / 10.0, a1 / 10.0, a2 / 10.0});
    }
  return grid;
}

struct SweepJob {
  std::size_t index = 0;
  AlphaConfig alpha;
  std::optional<std::size_t> fc_width;
  BackboneKind backbone = BackboneKind::MobileNetV2;
  std::uint64_t seed = 0;
};

struct SweepRow {
  SweepJob job;
  EvalReport report;
};

inline std::string fc_label(std::optional<std::size_t> fc) { return fc ? "fc" + std::to_string(*fc) : "no-fc"; }

/// Validates every grid row before anything runs, then expands
/// backbones x fc variants x alphas. Within a variant the alphas are ordered
/// by nondecreasing last coefficient (stable). Job j gets seed base_seed + j.
inline std::vector<SweepJob> plan_sweep(const std::vector<std::vector<double>>& grid,
                                        const std::vector<std::optional<std::size_t>>& fc_widths,
                                        const std::vector<BackboneKind>& backbones, std::uint64_t base_seed) {
  if (grid.empty()) fail(ErrorKind::EmptyConfig, "alpha grid is empty");
  if (fc_widths.empty() || backbones.empty()) fail(ErrorKind::EmptyConfig, "sweep needs at least one variant");
  std::vector<AlphaConfig> alphas;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    try {
      alphas.push_back(validate_alphas(grid[r]));
    } catch (const Error& e) {
      fail(e.kind(), "alpha grid row " + std::to_string(r + 1) + ": " + e.what());
    }
  }
  for (const auto& fc : fc_widths) validate_fc_width(fc);
  std::stable_sort(alphas.begin(), alphas.end(),
                   [](const AlphaConfig& a, const AlphaConfig& b) { return a.values().back() < b.values().back(); });
  std::vector<SweepJob> jobs;
  for (auto backbone : backbones)
    for (const auto& fc : fc_widths)
      for (const auto& a : alphas) {
        SweepJob job{jobs.size(), a, fc, backbone, base_seed + jobs.size()};
        jobs.push_back(std::move(job));
      }
  return jobs;
}

using SweepRunner = std::function<EvalReport(const SweepJob&)>;

/// Runs every job (sequentially, or on `workers` threads) and returns rows in job order.
inline std::vector<SweepRow> sweep_alphas(const std::vector<SweepJob>& jobs, const SweepRunner& run,
                                          std::size_t workers = 1) {
  std::vector<std::optional<EvalReport>> reports(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t j) { reports[j] = run(jobs[j]); });
  std::vector<SweepRow> rows;
  for (std::size_t j = 0; j < jobs.size(); ++j) rows.push_back({jobs[j], std::move(*reports[j])});
  return rows;
}

/// Highest overall accuracy; the earliest row wins ties.
inline const SweepRow& best_row(const std::vector<SweepRow>& rows) {
  if (rows.empty()) fail(ErrorKind::EmptyEvalSet, "no sweep results");
  const SweepRow* best = &rows.front();
  for (const auto& r : rows)
    if (r.report.overall_accuracy > best->report.overall_accuracy) best = &r;
  return *best;
}

}  // namespace sidetune
