// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>

#include "splitveil/tensor.hpp"

namespace splitveil {

/// Seeded random stream. The algorithm is pinned (xoshiro256** seeded through
/// splitmix64; normals by the Marsaglia polar method) so that a seed replays
/// the same draws on every platform. There is no global generator: every
/// consumer is handed its own stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  Tensor normal_tensor(std::size_t rows, std::size_t cols, double stddev = 1.0);

  /// Independent child stream; the parent is not advanced.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  std::optional<double> spare_normal_;
};

/// Deterministic seed derivation used wherever one seed fans out into several.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace splitveil
