// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "splitveil/rng.hpp"
#include "splitveil/tensor.hpp"

namespace splitveil {

/// Class labels in [0, num_classes).
struct LabelVector {
  std::vector<int> labels;
  int num_classes = 2;

  LabelVector() = default;
  /// Validates that num_classes >= 2 and every label is in range.
  LabelVector(std::vector<int> labels, int num_classes);

  std::size_t size() const noexcept { return labels.size(); }
  int operator[](std::size_t i) const { return labels[i]; }

  LabelVector gather(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
  /// Number of distinct classes actually present.
  int classes_present() const;
  /// Row-per-example one-hot encoding.
  Tensor one_hot() const;
};

/// Projects X onto its top-k principal directions. Columns are ordered by
/// decreasing variance and each direction is signed so that its
/// largest-magnitude entry is positive. Zero-variance input yields zeros.
Tensor pca_project(const Tensor& x, std::size_t k);

/// Top-k principal directions as rows (k x d), same ordering and signs as
/// pca_project.
Tensor pca_components(const Tensor& x, std::size_t k);

struct KMeansOptions {
  std::size_t max_iters = 100;
  double rel_tol = 1e-9;
};

struct KMeansResult {
  std::vector<int> assignments;
  Tensor centers;
  /// Sum of squared distances after seeding and after every Lloyd iteration.
  std::vector<double> cost_history;
};

/// Lloyd's algorithm with k-means++ seeding drawn from `rng`.
KMeansResult kmeans(const Tensor& x, std::size_t k, Rng& rng, const KMeansOptions& opts = {});

inline std::vector<int> kmeans_cluster(const Tensor& x, std::size_t k, Rng& rng) {
  return kmeans(x, k, rng).assignments;
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half. `labels` must be 0/1 with both classes present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Multinomial logistic-regression head: logits = H·Wᵀ + b.
struct LinearHead {
  Tensor weights;  // C x d
  std::vector<double> bias;

  std::size_t num_classes() const noexcept { return weights.rows(); }
  std::size_t dim() const noexcept { return weights.cols(); }

  Tensor logits(const Tensor& h) const;
  /// Row-wise softmax of logits.
  Tensor probabilities(const Tensor& h) const;
  std::vector<int> predict(const Tensor& h) const;
};

/// Row-wise softmax, numerically stabilised.
Tensor softmax_rows(const Tensor& logits);

/// Mean cross-entropy of the head on (h, y).
double cross_entropy(const LinearHead& head, const Tensor& h, const LabelVector& y);

struct HeadGradient {
  double loss = 0.0;
  Tensor d_weights;
  std::vector<double> d_bias;
  /// Gradient of the mean loss with respect to h.
  Tensor d_h;
};

/// Mean cross-entropy and its gradient with respect to head parameters and inputs.
HeadGradient cross_entropy_grad(const LinearHead& head, const Tensor& h, const LabelVector& y);

/// Full-batch gradient descent on mean cross-entropy plus (l2 / 2)·‖W‖²
/// (bias unpenalized), from zero initialisation.
LinearHead fit_linear_head(const Tensor& h, const LabelVector& y, std::size_t iters, double lr, double l2 = 0.0);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

}  // namespace splitveil
