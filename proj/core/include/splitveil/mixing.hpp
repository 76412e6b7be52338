// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "splitveil/rng.hpp"
#include "splitveil/tensor.hpp"

namespace splitveil {

/// Client-private per-dimension weights that combine n adapter outputs.
/// Rows sum to the all-ones vector, so the mixture of identical adapter
/// outputs is that output unchanged.
struct MixingWeights {
  Tensor weights;  // n x d
  /// ξ_{i,j} for i < j as 1 x d rows, ordered (0,1), (0,2), ..., (1,2), ...
  std::vector<Tensor> xi;
  double sigma_xi = 1.0;
  std::uint64_t seed = 0;

  std::size_t num_adapters() const noexcept { return weights.rows(); }
  std::size_t dim() const noexcept { return weights.cols(); }
  /// Position of ξ_{i,j} (i < j) in `xi`.
  static std::size_t xi_index(std::size_t n, std::size_t i, std::size_t j);
};

/// Row i = e/n + Σ_{j>i} ξ_{i,j} − Σ_{j<i} ξ_{j,i} with ξ ~ N(0, σ²I).
/// Row 0 is stored as e − Σ_{i≥1} row i, which equals the formula up to
/// rounding and makes the column sums hold to the last bit of each term.
MixingWeights generate_mixing_weights(std::size_t n, std::size_t d, double sigma_xi, Rng& rng);

/// Σᵢ Wᵢ ⊙ hᵢ, evaluated as h₀ + Σ_{i≥1} Wᵢ ⊙ (hᵢ − h₀) so that identical
/// inputs come back bit-for-bit.
Tensor mixed_forward(std::span<const Tensor> outputs, const MixingWeights& mixing);

/// Gradient of ⟨g, h′⟩ with respect to each hᵢ: Wᵢ ⊙ g, broadcast over rows.
std::vector<Tensor> mixed_backward(const Tensor& g_mixed, const MixingWeights& mixing);

}  // namespace splitveil
