// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/privbp.hpp"

#include <cmath>
#include <exception>
#include <future>
#include <string>

#include "splitveil/error.hpp"

namespace splitveil {

Tensor ObfuscationBundle::combine() const {
  if (shards.empty()) throw InputError("empty obfuscation bundle");
  Tensor out(shards.front().rows(), shards.front().cols());
  for (std::size_t j = 0; j < shards.size(); ++j) axpy(coeffs[j], shards[j], out);
  return out;
}

double noise_floor(const Tensor& g_h, double factor) { return factor * max_row_sq_norm(g_h); }

ObfuscationBundle obfuscate_noise(const Tensor& g_h, std::size_t m, double noise_var, Rng& rng,
                                  double floor_factor) {
  if (m < 2) throw ParameterError("obfuscate_noise: m must be at least 2 (got " + std::to_string(m) + ")");
  const double floor = noise_floor(g_h, floor_factor);
  if (!(noise_var >= floor) || noise_var <= 0.0) {
    throw ParameterError("obfuscate_noise: noise_var " + std::to_string(noise_var) +
                         " below floor " + std::to_string(floor));
  }
  const double stddev = std::sqrt(noise_var);
  ObfuscationBundle bundle;
  if (m == 2) {
    const Tensor z = rng.normal_tensor(g_h.rows(), g_h.cols(), stddev);
    bundle.shards = {g_h + z, g_h - z};
    bundle.coeffs = {0.5, 0.5};
    return bundle;
  }
  Tensor rest = g_h;
  for (std::size_t j = 0; j + 1 < m; ++j) {
    double alpha = 0.0;
    while (alpha == 0.0) alpha = rng.uniform(-1.0, 1.0);
    Tensor shard = rng.normal_tensor(g_h.rows(), g_h.cols(), stddev);
    axpy(-alpha, shard, rest);
    bundle.shards.push_back(std::move(shard));
    bundle.coeffs.push_back(alpha);
  }
  const double last = rng.uniform(0.5, 1.0);
  bundle.shards.push_back((1.0 / last) * std::move(rest));
  bundle.coeffs.push_back(last);
  return bundle;
}

ObfuscationBundle obfuscate_subspace(const Tensor& directions, std::span<const double> scales,
                                     int num_classes, std::optional<std::size_t> requested_shards) {
  if (num_classes != 2) {
    throw UnsupportedSchemeError("subspace scheme supports binary heads only (got " +
                                 std::to_string(num_classes) + " classes)");
  }
  const std::size_t batch = directions.rows();
  if (requested_shards && *requested_shards != batch) {
    throw UnsupportedSchemeError("subspace scheme needs m == batch size (m=" +
                                 std::to_string(*requested_shards) + ", B=" + std::to_string(batch) + ")");
  }
  if (scales.size() != batch) throw DimensionError("subspace scheme: one scale per example required");
  ObfuscationBundle bundle;
  for (std::size_t b = 0; b < batch; ++b) {
    Tensor shard(batch, directions.cols());
    std::ranges::copy(directions.row(b), shard.row(b).begin());
    bundle.shards.push_back(std::move(shard));
    bundle.coeffs.push_back(scales[b]);
  }
  return bundle;
}

HeadSubspace binary_head_subspace(const LinearHead& head, const Tensor& h, const Tensor& g_h) {
  if (head.num_classes() != 2) {
    throw UnsupportedSchemeError("subspace scheme supports binary heads only (got " +
                                 std::to_string(head.num_classes()) + " classes)");
  }
  require_same_shape(h, g_h, "binary_head_subspace");
  const Tensor p = head.probabilities(h);
  const std::size_t d = h.cols();
  std::vector<double> w_diff(d);
  for (std::size_t k = 0; k < d; ++k) w_diff[k] = head.weights(1, k) - head.weights(0, k);

  HeadSubspace out{Tensor(h.rows(), d), std::vector<double>(h.rows())};
  for (std::size_t b = 0; b < h.rows(); ++b) {
    // ∂p₁/∂h = p₁(1 − p₁)(w₁ − w₀); fall back to w₁ − w₀ if the scalar underflows.
    double s = p(b, 1) * (1.0 - p(b, 1));
    if (s == 0.0) s = 1.0;
    auto dir = out.directions.row(b);
    double dir_sq = 0.0, proj = 0.0, g_sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      dir[k] = s * w_diff[k];
      dir_sq += dir[k] * dir[k];
      proj += dir[k] * g_h(b, k);
      g_sq += g_h(b, k) * g_h(b, k);
    }
    if (dir_sq == 0.0) {
      if (g_sq != 0.0) throw UnsupportedSchemeError("head has no discriminative direction");
      continue;
    }
    const double scale = proj / dir_sq;
    double resid_sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double r = g_h(b, k) - scale * dir[k];
      resid_sq += r * r;
    }
    if (resid_sq > 1e-18 * std::max(g_sq, 1e-300)) {
      throw UnsupportedSchemeError("row " + std::to_string(b) + " of g_h is not on the head direction");
    }
    out.scales[b] = scale;
  }
  return out;
}

AdapterGrad recover_gradient(const ObfuscationBundle& bundle, std::span<const AdapterGrad> shard_grads) {
  if (shard_grads.size() != bundle.size() || shard_grads.empty())
    throw InputError("recover_gradient: need one gradient per shard");
  AdapterGrad out = shard_grads[0];
  out *= bundle.coeffs[0];
  for (std::size_t j = 1; j < shard_grads.size(); ++j) out.axpy(bundle.coeffs[j], shard_grads[j]);
  return out;
}

AdapterGrad private_backprop(const ObfuscationBundle& bundle, const Tensor& x,
                             const AdapterSet& adapters, std::span<ServerEndpoint* const> shard_servers,
                             RequestMeta meta, std::uint64_t seed) {
  if (bundle.size() < 2 && bundle.size() != x.rows())
    throw ParameterError("private_backprop: bundle needs at least 2 shards");
  if (shard_servers.size() != bundle.size())
    throw InputError("private_backprop: need one server per shard");

  std::vector<std::future<AdapterGrad>> pending;
  pending.reserve(bundle.size());
  for (std::size_t j = 0; j < bundle.size(); ++j) {
    RequestMeta shard_meta = meta;
    shard_meta.shard = static_cast<std::int64_t>(j);
    ServerEndpoint* server = shard_servers[j];
    const Tensor* shard = &bundle.shards[j];
    pending.push_back(std::async(std::launch::async, [=, &x, &adapters] {
      return call_backprop(*server, x, adapters, *shard, shard_meta, seed);
    }));
  }
  // Collect everything before rethrowing so no task outlives its inputs.
  std::vector<AdapterGrad> grads;
  std::exception_ptr failure;
  for (auto& f : pending) {
    try {
      grads.push_back(f.get());
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return recover_gradient(bundle, grads);
}

AdapterGrad private_backprop(const Tensor& x, const AdapterSet& adapters, const Tensor& g_h,
                             const NoiseScheme& scheme, Rng& rng,
                             std::span<ServerEndpoint* const> shard_servers, RequestMeta meta,
                             std::uint64_t seed) {
  const ObfuscationBundle bundle = obfuscate_noise(g_h, scheme.shards, scheme.noise_var, rng, scheme.floor_factor);
  return private_backprop(bundle, x, adapters, shard_servers, meta, seed);
}

AdapterGrad invert_sgd(const AdapterSet& before, const AdapterSet& after, double lr) {
  if (!(lr > 0.0)) throw ParameterError("invert_sgd: learning rate must be positive");
  const std::vector<double> a = before.flatten();
  const std::vector<double> b = after.flatten();
  if (a.size() != b.size()) throw DimensionError("invert_sgd: adapter sets differ in shape");
  std::vector<double> g(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) g[i] = (a[i] - b[i]) / lr;
  return AdapterGrad::from_flat(before, g);
}

OptimizerState noise_optimizer_state(OptimizerState state, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ParameterError("noise_optimizer_state: sigma must be non-negative");
  if (sigma == 0.0) return state;
  for (double& v : state.v) v += std::abs(sigma * rng.normal());
  return state;
}

}  // namespace splitveil
