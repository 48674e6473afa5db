// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sidetune/core/random.hpp"
#include "sidetune/data/corpus.hpp"

namespace sidetune {

struct DatasetSplit {
  std::vector<DocumentSample> train;
  std::vector<DocumentSample> val;
  std::vector<DocumentSample> test;
  std::uint64_t seed = 0;
  std::vector<std::string> class_names;

  const std::vector<DocumentSample>& part(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    fail(ErrorKind::ConfigError, "unknown split '" + name + "' (expected train, val or test)");
  }
};

using SplitSizes = std::array<std::size_t, 3>;
inline constexpr SplitSizes kTobaccoSplit{800, 200, 2482};

namespace split_detail {

/// Largest-remainder allocation of `total` items across groups proportional
/// to `weights`, never exceeding `caps`.
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& weights,
                                          const std::vector<std::size_t>& caps) {
  const double sum = static_cast<double>(std::accumulate(weights.begin(), weights.end(), std::size_t{0}));
  std::vector<std::size_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t given = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = sum > 0 ? static_cast<double>(total) * static_cast<double>(weights[i]) / sum : 0.0;
    out[i] = std::min(caps[i], static_cast<std::size_t>(exact));
    given += out[i];
    remainders.emplace_back(exact - static_cast<double>(out[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  while (given < total) {
    bool progressed = false;
    for (const auto& [rem, i] : remainders) {
      if (given == total) break;
      if (out[i] < caps[i]) {
        ++out[i];
        ++given;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return out;
}

}  // namespace split_detail

/// Seeded random train/val/test split with fixed cardinalities. The stratified
/// variant allocates each split's quota across classes proportionally.
inline DatasetSplit split_random(std::span<const DocumentSample> samples, std::uint64_t seed,
                                 SplitSizes sizes = kTobaccoSplit, bool stratified = false) {
  const std::size_t want = sizes[0] + sizes[1] + sizes[2];
  if (samples.size() != want)
    fail(ErrorKind::SizeMismatch, "split sizes " + std::to_string(sizes[0]) + "/" + std::to_string(sizes[1]) + "/" +
                                      std::to_string(sizes[2]) + " sum to " + std::to_string(want) + " but corpus has " +
                                      std::to_string(samples.size()) + " samples");
  DatasetSplit split;
  split.seed = seed;
  Rng rng(seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_in_place(std::span<std::size_t>(order), rng);

  auto take = [&](const std::vector<std::size_t>& idx, std::size_t from, std::size_t count,
                  std::vector<DocumentSample>& dst) {
    for (std::size_t k = from; k < from + count; ++k) dst.push_back(samples[idx[k]]);
  };

  if (!stratified) {
    take(order, 0, sizes[0], split.train);
    take(order, sizes[0], sizes[1], split.val);
    take(order, sizes[0] + sizes[1], sizes[2], split.test);
    return split;
  }

  int max_label = 0;
  for (const auto& s : samples) max_label = std::max(max_label, s.label);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label) + 1);
  for (auto i : order) by_class[static_cast<std::size_t>(samples[i].label)].push_back(i);
  std::vector<std::size_t> counts;
  for (const auto& g : by_class) counts.push_back(g.size());
  const auto train_q = split_detail::apportion(sizes[0], counts, counts);
  std::vector<std::size_t> left(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) left[c] = counts[c] - train_q[c];
  const auto val_q = split_detail::apportion(sizes[1], counts, left);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    take(by_class[c], 0, train_q[c], split.train);
    take(by_class[c], train_q[c], val_q[c], split.val);
    take(by_class[c], train_q[c] + val_q[c], counts[c] - train_q[c] - val_q[c], split.test);
  }
  // interleave classes inside each split
  for (auto* part : {&split.train, &split.val, &split.test}) shuffle_in_place(std::span<DocumentSample>(*part), rng);
  return split;
}

/// Split of an index-file corpus according to its shipped lists.
inline DatasetSplit split_fixed(const Corpus& corpus) {
  if (!corpus.fixed_split) fail(ErrorKind::LayoutMismatch, "corpus has no fixed split lists");
  const auto& sz = *corpus.fixed_split;
  DatasetSplit split;
  const auto* p = corpus.samples.data();
  split.train.assign(p, p + sz[0]);
  split.val.assign(p + sz[0], p + sz[0] + sz[1]);
  split.test.assign(p + sz[0] + sz[1], p + sz[0] + sz[1] + sz[2]);
  split.class_names = corpus.class_names;
  return split;
}

}  // namespace sidetune
