// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

// Privacy-preserving backpropagation. Backprop is linear in the output
// cotangent for fixed (x, θ), so the client splits g_h into m pseudo-gradients
// ĝ¹..ĝᵐ with private coefficients α such that g_h = Σ αⱼ ĝʲ, sends each ĝʲ
// to a server, and recombines g_θ = Σ αⱼ backprop(x, θ, ĝʲ). Servers never
// see g_h or α.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "splitveil/backbone.hpp"
#include "splitveil/ftapi.hpp"
#include "splitveil/optim.hpp"
#include "splitveil/rng.hpp"
#include "splitveil/stats.hpp"
#include "splitveil/tensor.hpp"

namespace splitveil {

/// Shards are sent to servers; coeffs never leave the client.
struct ObfuscationBundle {
  std::vector<Tensor> shards;
  std::vector<double> coeffs;

  std::size_t size() const noexcept { return shards.size(); }
  /// Σ coeffs[j] · shards[j], summed in shard order.
  Tensor combine() const;
};

inline constexpr double kNoiseFloorFactor = 100.0;

/// Smallest admissible noise variance: factor · max row ‖g_h‖².
double noise_floor(const Tensor& g_h, double factor = kNoiseFloorFactor);

/// Paired-noise scheme. m = 2: {g_h + z, g_h − z} with coeffs {½, ½}.
/// m > 2: m−1 Gaussian shards with coeffs in Uniform(−1, 1) \ {0}, and a last
/// shard solving the combination with its coeff in Uniform(½, 1).
/// z and the Gaussian shards have per-entry variance noise_var.
ObfuscationBundle obfuscate_noise(const Tensor& g_h, std::size_t m, double noise_var, Rng& rng,
                                  double floor_factor = kNoiseFloorFactor);

/// Per-example basis scheme for binary heads: shard b holds directions row b
/// (zeros elsewhere) and coeff b = scales[b]. Requires m == B.
ObfuscationBundle obfuscate_subspace(const Tensor& directions, std::span<const double> scales,
                                     int num_classes = 2,
                                     std::optional<std::size_t> requested_shards = std::nullopt);

/// Per-example direction ∂p_b/∂h_b of a binary softmax head, plus the scale
/// that maps it onto row b of g_h.
struct HeadSubspace {
  Tensor directions;
  std::vector<double> scales;
};

/// Throws UnsupportedSchemeError for non-binary heads or if a row of g_h does
/// not lie on its example's direction.
HeadSubspace binary_head_subspace(const LinearHead& head, const Tensor& h, const Tensor& g_h);

/// Σ coeffs[j] · shard_grads[j] in shard order.
AdapterGrad recover_gradient(const ObfuscationBundle& bundle, std::span<const AdapterGrad> shard_grads);

/// Sends shard j to shard_servers[j] (in parallel) and recombines. Any failed
/// shard call fails the whole operation.
AdapterGrad private_backprop(const ObfuscationBundle& bundle, const Tensor& x,
                             const AdapterSet& adapters, std::span<ServerEndpoint* const> shard_servers,
                             RequestMeta meta = {}, std::uint64_t seed = 0);

struct NoiseScheme {
  std::size_t shards = 2;
  double noise_var = 1000.0;
  double floor_factor = kNoiseFloorFactor;
};

AdapterGrad private_backprop(const Tensor& x, const AdapterSet& adapters, const Tensor& g_h,
                             const NoiseScheme& scheme, Rng& rng,
                             std::span<ServerEndpoint* const> shard_servers, RequestMeta meta = {},
                             std::uint64_t seed = 0);

/// (θ_t − θ_{t+1}) / lr: what a server holding two consecutive versions
/// learns if the client runs plain SGD.
AdapterGrad invert_sgd(const AdapterSet& before, const AdapterSet& after, double lr);

/// Adds |N(0, σ²)| to every second-moment entry so that consecutive
/// parameters no longer reveal the gradient. σ = 0 leaves the state unchanged.
OptimizerState noise_optimizer_state(OptimizerState state, double sigma, Rng& rng);

}  // namespace splitveil
