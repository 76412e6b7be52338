// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "splitveil/stats.hpp"
#include "splitveil/tensor.hpp"

namespace splitveil {

struct Dataset {
  Tensor x;
  LabelVector y;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  /// "synthetic:<task>:n=..:d=..:seed=.." or "csv:<path>".
  std::string provenance;

  std::size_t num_features() const noexcept { return x.cols(); }
  int num_classes() const noexcept { return y.num_classes; }
};

/// Splits indices per class; for binary tasks the test part holds the same
/// number of examples of each class. Train and test are sorted and disjoint.
void assign_split(Dataset& data, double test_fraction, std::uint64_t seed);

/// Deterministic toy tasks:
///  - "blobs2", "blobs3": unit-variance Gaussian blobs with centers 10 apart
///    (needs input_dim >= number of classes);
///  - "xor_embed": four clusters at (±1, ±1) in the first two coordinates,
///    labelled by the sign of their product, other coordinates noise;
///  - "teacher": standard normal inputs labelled by thresholding a hidden
///    random tanh network at its median.
/// All use an 80/20 split. Throws ConfigError for an unknown task.
Dataset make_synthetic(std::string_view task, std::size_t num_examples, std::size_t input_dim,
                       std::uint64_t seed);

/// Header row, float feature columns, integer label in the last column.
/// Throws ParseError with the offending line number.
Dataset load_csv(const std::filesystem::path& path, std::uint64_t split_seed = 0, double test_fraction = 0.2);
Dataset parse_csv(std::string_view text, std::uint64_t split_seed = 0, double test_fraction = 0.2);

/// Writes features in shortest round-trip form, so load_csv reproduces them.
void save_csv(const std::filesystem::path& path, const Dataset& data);
std::string to_csv(const Dataset& data);

}  // namespace splitveil
