// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace sidetune {

using Rng = std::mt19937_64;

// std::uniform_*_distribution results differ between standard libraries; the
// draws below depend only on the mt19937_64 stream, so seeded splits and
// initializations are portable.

/// Unbiased integer in [0, bound) via rejection sampling.
inline std::uint64_t draw_below(Rng& rng, std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = Rng::max() - (Rng::max() % bound);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double draw_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0); }

inline double draw_uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * draw_unit(rng); }

template <typename U>
void shuffle_in_place(std::span<U> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(draw_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace sidetune
