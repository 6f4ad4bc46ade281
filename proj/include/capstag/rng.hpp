#pragma once

#include <cstdint>
#include <random>

namespace capstag {

using Rng = std::mt19937_64;

// Explicit draw helpers instead of <random> distributions so that streams are
// bit-reproducible across standard library implementations.

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0,1)
}

inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  return n ? rng() % n : 0;
}

inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi_inclusive) {
  return lo + static_cast<std::size_t>(uniform_below(rng, hi_inclusive - lo + 1));
}

// Derive an independent stream from a base seed and a fixed role tag.
inline Rng derived_rng(std::uint64_t seed, std::uint64_t role) {
  return Rng(seed * 0x9e3779b97f4a7c15ULL + role);
}

}  // namespace capstag
