// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/mixing.hpp"

#include <string>

#include "splitveil/error.hpp"

namespace splitveil {

std::size_t MixingWeights::xi_index(std::size_t n, std::size_t i, std::size_t j) {
  if (!(i < j && j < n)) throw InputError("xi_index: need i < j < n");
  // Pairs before row i: (n-1) + (n-2) + ... + (n-i).
  return i * (2 * n - i - 1) / 2 + (j - i - 1);
}

MixingWeights generate_mixing_weights(std::size_t n, std::size_t d, double sigma_xi, Rng& rng) {
  if (n == 0 || d == 0) throw ParameterError("generate_mixing_weights: n and d must be positive");
  if (!(sigma_xi >= 0.0)) throw ParameterError("generate_mixing_weights: sigma_xi must be non-negative");
  MixingWeights out;
  out.sigma_xi = sigma_xi;
  out.seed = rng.seed();
  out.weights = Tensor(n, d, 1.0);
  if (n == 1) return out;

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out.xi.push_back(rng.normal_tensor(1, d, sigma_xi));

  const double base = 1.0 / static_cast<double>(n);
  for (std::size_t i = 1; i < n; ++i) {
    auto row = out.weights.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      double w = base;
      for (std::size_t j = i + 1; j < n; ++j) w += out.xi[MixingWeights::xi_index(n, i, j)](0, k);
      for (std::size_t j = 0; j < i; ++j) w -= out.xi[MixingWeights::xi_index(n, j, i)](0, k);
      row[k] = w;
    }
  }
  auto anchor = out.weights.row(0);
  for (std::size_t k = 0; k < d; ++k) {
    double rest = 0.0;
    for (std::size_t i = 1; i < n; ++i) rest += out.weights(i, k);
    anchor[k] = 1.0 - rest;
  }
  return out;
}

namespace {

void check_mixing_shapes(std::span<const Tensor> outputs, const MixingWeights& mixing) {
  if (outputs.size() != mixing.num_adapters()) {
    throw DimensionError("mixing expects " + std::to_string(mixing.num_adapters()) + " outputs, got " +
                         std::to_string(outputs.size()));
  }
  for (const Tensor& h : outputs) {
    require_same_shape(h, outputs.front(), "mixed_forward");
    if (h.cols() != mixing.dim()) throw DimensionError("mixing weight width does not match activations");
  }
}

}  // namespace

Tensor mixed_forward(std::span<const Tensor> outputs, const MixingWeights& mixing) {
  check_mixing_shapes(outputs, mixing);
  const Tensor& anchor = outputs.front();
  Tensor out = anchor;
  for (std::size_t i = 1; i < outputs.size(); ++i) {
    const auto w = mixing.weights.row(i);
    for (std::size_t b = 0; b < out.rows(); ++b) {
      auto dst = out.row(b);
      const auto src = outputs[i].row(b);
      const auto base = anchor.row(b);
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += w[k] * (src[k] - base[k]);
    }
  }
  return out;
}

std::vector<Tensor> mixed_backward(const Tensor& g_mixed, const MixingWeights& mixing) {
  if (g_mixed.cols() != mixing.dim()) throw DimensionError("mixed_backward: gradient width mismatch");
  std::vector<Tensor> out;
  out.reserve(mixing.num_adapters());
  for (std::size_t i = 0; i < mixing.num_adapters(); ++i) {
    Tensor g = g_mixed;
    const auto w = mixing.weights.row(i);
    for (std::size_t b = 0; b < g.rows(); ++b) {
      auto r = g.row(b);
      for (std::size_t k = 0; k < r.size(); ++k) r[k] *= w[k];
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace splitveil
