// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace splitveil {

struct OptimizerConfig {
  enum class Kind { kAdam, kSgd };
  Kind kind = Kind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled (AdamW-style) weight decay; ignored by SGD.
  double weight_decay = 0.0;
};

std::string_view to_string(OptimizerConfig::Kind kind);

/// First/second moment estimates for one flat parameter vector.
struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t steps = 0;

  static OptimizerState zeros(std::size_t n) { return {std::vector<double>(n), std::vector<double>(n), 0}; }
};

/// One update of `params` in place. `t` is the zero-based step index used for
/// bias correction (Adam uses t + 1).
void opt_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
              const OptimizerConfig& config, std::size_t t);

}  // namespace splitveil
