// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "splitveil/rng.hpp"
#include "splitveil/stats.hpp"
#include "splitveil/tensor.hpp"

namespace splitveil {

/// How the client refits each adversarial head: from zero weights, on the
/// current batch, by full-batch gradient descent.
struct HeadPolicy {
  std::size_t iters = 100;
  double lr = 0.5;
  /// Ridge penalty on the head weights. A batch no larger than the feature
  /// dimension is always separable, so without it the fitted weights and the
  /// resulting gradient grow without bound. 1/64 matches a C = 1 logistic
  /// regression on a 64-example batch.
  double l2 = 1.0 / 64.0;
};

struct AdversarialLoss {
  /// −(cross-entropy of the fitted head); 0 when the fit was skipped.
  double loss = 0.0;
  /// ∂loss/∂h with the head held fixed.
  Tensor grad;
  LinearHead head;
  bool skipped = false;
};

/// Fits a head to (h, y), then scores h against it. Minimizing the returned
/// loss pushes h towards where the fitted head is least certain. A batch
/// with a single class skips the fit and returns loss 0 and a zero gradient.
AdversarialLoss adversarial_reg_loss(const Tensor& h, const LabelVector& y, const HeadPolicy& policy = {});

/// Same loss against a given, frozen head.
AdversarialLoss adversarial_reg_loss(const Tensor& h, const LabelVector& y, const LinearHead& head);

/// Biased sample distance correlation between rows of h and rows of y.
/// Returns 0 when either distance variance vanishes.
double distance_correlation(const Tensor& h, const Tensor& y);

struct DistanceCorrelation {
  double value = 0.0;
  /// ∂value/∂h; zero wherever the value is 0.
  Tensor grad;
};

DistanceCorrelation distance_correlation_grad(const Tensor& h, const Tensor& y);

/// e^ε / (e^ε + K − 1).
double rr_keep_probability(double epsilon, int num_classes);

/// Keeps each label with rr_keep_probability(ε, K), otherwise replaces it by
/// one of the other K − 1 classes uniformly. Throws ParameterError for ε < 0.
LabelVector randomized_response(const LabelVector& y, double epsilon, int num_classes, Rng& rng);

}  // namespace splitveil
