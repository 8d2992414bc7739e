// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace exdn {

/// Main RNG used for all sequential sampling decisions. Serializable via
/// operator<</>> so training state round-trips exactly.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Cheap stateless-seedable generator for per-ray jitter. Worker threads
/// derive one from (seed, iteration, ray slot) so the draw sequence never
/// depends on the thread partition.
class SplitMix {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  SplitMix(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b) : state_(seed) {
    state_ = splitmix64(state_) ^ stream_a;
    state_ = splitmix64(state_) ^ stream_b;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~0ULL; }
  result_type operator()() { return splitmix64(state_); }

  /// Uniform double in [0, 1).
  double uniform() { return (operator()() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

}  // namespace exdn
