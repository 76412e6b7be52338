// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

// Label-inference attacks available to an honest-but-curious server, and the
// worst-case aggregation used as the privacy number of a run.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "splitveil/stats.hpp"
#include "splitveil/tensor.hpp"

namespace splitveil {

/// Top-1 principal projection as a score; max(auc, 1 − auc).
double spectral_attack(const Tensor& data, const LabelVector& y);

/// Row L2 norm as a score; max(auc, 1 − auc).
double norm_attack(const Tensor& data, const LabelVector& y);

/// k-means with k = C, then the best one-to-one cluster-to-label matching.
double kmeans_attack(const Tensor& data, const LabelVector& y, std::uint64_t seed = 0);

/// Fraction of examples placed correctly by the best cluster-to-label
/// matching of `confusion` (clusters x labels). Exhaustive for up to 8 classes.
double best_matching_accuracy(const std::vector<std::vector<std::size_t>>& confusion);

struct ProbeOptions {
  std::size_t rounds = 200;
  double learning_rate = 0.1;
  double l2 = 1.0;
};

/// Logistic gradient boosting over depth-1 trees. Split search is exhaustive
/// over features and midpoints; ties go to the lowest feature, then the lowest
/// threshold, so training is deterministic.
class StumpEnsemble {
 public:
  struct Stump {
    std::size_t feature = 0;
    double threshold = 0.0;
    double left = 0.0;   // value for x[feature] <= threshold
    double right = 0.0;
  };

  static StumpEnsemble fit(const Tensor& x, std::span<const int> labels, const ProbeOptions& options = {});

  double margin(std::span<const double> row) const;
  std::vector<int> predict(const Tensor& x) const;
  const std::vector<Stump>& stumps() const noexcept { return stumps_; }

 private:
  std::vector<Stump> stumps_;
  double learning_rate_ = 0.1;
};

struct ProbeSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified split whose test part has the same number of examples of each
/// class (the larger classes are trimmed in test, the surplus goes to train).
ProbeSplit balanced_split(const LabelVector& y, double test_fraction, std::uint64_t seed);

/// Mean per-class recall.
double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth, int num_classes);

/// Fits a StumpEnsemble on the train part, reports balanced test accuracy.
/// Binary labels only. Throws InputError for empty, overlapping or
/// single-class splits.
double probe_attack(const Tensor& observed, const LabelVector& y, const ProbeSplit& split,
                    const ProbeOptions& options = {});

// ---------------------------------------------------------------------------
// Reports

struct AttackMetrics {
  std::optional<double> spectral_auc;
  std::optional<double> norm_auc;
  std::optional<double> kmeans_acc;
  std::optional<double> probe_acc;

  /// Largest metric present; throws InputError if none is.
  double worst() const;
  /// Element-wise max, keeping whichever side is present.
  void merge_max(const AttackMetrics& other);
};

struct AttackOptions {
  bool probe = false;
  double probe_test_fraction = 0.3;
  std::uint64_t seed = 0;
};

/// Runs every applicable attack. Binary labels get all AUC metrics; more
/// classes get k-means accuracy only.
AttackMetrics evaluate_observable(const Tensor& data, const LabelVector& y, const AttackOptions& options = {});

struct AttackRecord {
  std::int64_t step = 0;
  std::string observable;
  AttackMetrics metrics;
};

struct AttackReport {
  std::vector<AttackRecord> records;

  void add(std::int64_t step, std::string observable, AttackMetrics metrics);
  bool empty() const noexcept { return records.empty(); }
};

struct LeakageSummary {
  /// Max of each metric over steps, per observable.
  std::map<std::string, AttackMetrics> per_metric;
  /// Max over steps and metrics, per observable.
  std::map<std::string, double> worst;
};

/// Throws InputError on an empty report.
LeakageSummary leakage_summary(const AttackReport& report);

/// One JSON object per record, newline-terminated.
std::string report_to_jsonl(const AttackReport& report);
AttackReport report_from_jsonl(std::string_view text);
std::string summary_to_json(const LeakageSummary& summary);

}  // namespace splitveil
