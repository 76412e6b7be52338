// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/optim.hpp"

#include <cmath>

#include "splitveil/error.hpp"

namespace splitveil {

std::string_view to_string(OptimizerConfig::Kind kind) {
  return kind == OptimizerConfig::Kind::kAdam ? "adam" : "sgd";
}

void opt_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
              const OptimizerConfig& config, std::size_t t) {
  if (params.size() != grads.size()) throw DimensionError("opt_step: params/grads size mismatch");
  if (config.kind == OptimizerConfig::Kind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.lr * grads[i];
    ++state.steps;
    return;
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw DimensionError("opt_step: optimizer state size mismatch");
  const double step = static_cast<double>(t + 1);
  const double bc1 = 1.0 - std::pow(config.beta1, step);
  const double bc2 = 1.0 - std::pow(config.beta2, step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    if (config.weight_decay != 0.0) params[i] -= config.lr * config.weight_decay * params[i];
    params[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
  ++state.steps;
}

}  // namespace splitveil
