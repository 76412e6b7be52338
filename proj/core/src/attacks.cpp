// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "splitveil/error.hpp"
#include "splitveil/rng.hpp"

namespace splitveil {

namespace {

void require_binary(const LabelVector& y, std::string_view what) {
  if (y.num_classes != 2) throw InputError(std::string(what) + " needs binary labels");
}

double symmetric_auc(std::span<const double> scores, const LabelVector& y) {
  const double auc = roc_auc(scores, y.labels);
  return std::max(auc, 1.0 - auc);
}

}  // namespace

double spectral_attack(const Tensor& data, const LabelVector& y) {
  require_binary(y, "spectral_attack");
  if (data.rows() != y.size()) throw DimensionError("spectral_attack: row/label count mismatch");
  if (y.classes_present() < 2) throw UndefinedMetricError("spectral_attack: single class");
  const Tensor proj = pca_project(data, 1);
  return symmetric_auc(proj.data(), y);
}

double norm_attack(const Tensor& data, const LabelVector& y) {
  require_binary(y, "norm_attack");
  if (data.rows() != y.size()) throw DimensionError("norm_attack: row/label count mismatch");
  const std::vector<double> norms = row_norms(data);
  return symmetric_auc(norms, y);
}

double best_matching_accuracy(const std::vector<std::vector<std::size_t>>& confusion) {
  const std::size_t k = confusion.size();
  std::size_t total = 0;
  for (const auto& row : confusion) {
    if (row.size() != k) throw DimensionError("confusion matrix must be square");
    total = std::accumulate(row.begin(), row.end(), total);
  }
  if (total == 0) throw InputError("empty confusion matrix");
  std::size_t best = 0;
  if (k <= 8) {
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      std::size_t hit = 0;
      for (std::size_t c = 0; c < k; ++c) hit += confusion[c][perm[c]];
      best = std::max(best, hit);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    // Greedy: repeatedly take the largest remaining cell.
    std::vector<bool> row_used(k), col_used(k);
    for (std::size_t step = 0; step < k; ++step) {
      std::size_t br = 0, bc = 0, bv = 0;
      bool found = false;
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < k; ++c)
          if (!row_used[r] && !col_used[c] && (!found || confusion[r][c] > bv)) {
            br = r, bc = c, bv = confusion[r][c], found = true;
          }
      row_used[br] = col_used[bc] = true;
      best += bv;
    }
  }
  return static_cast<double>(best) / static_cast<double>(total);
}

double kmeans_attack(const Tensor& data, const LabelVector& y, std::uint64_t seed) {
  if (data.rows() != y.size()) throw DimensionError("kmeans_attack: row/label count mismatch");
  const auto k = static_cast<std::size_t>(y.num_classes);
  if (data.rows() < k) throw InputError("kmeans_attack: fewer rows than classes");
  Rng rng(seed);
  const std::vector<int> clusters = kmeans_cluster(data, k, rng);
  std::vector<std::vector<std::size_t>> confusion(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < y.size(); ++i)
    ++confusion[static_cast<std::size_t>(clusters[i])][static_cast<std::size_t>(y[i])];
  return best_matching_accuracy(confusion);
}

// ---------------------------------------------------------------------------
// Probe

StumpEnsemble StumpEnsemble::fit(const Tensor& x, std::span<const int> labels, const ProbeOptions& options) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n == 0 || d == 0) throw InputError("StumpEnsemble: empty training data");
  if (labels.size() != n) throw DimensionError("StumpEnsemble: row/label count mismatch");
  for (int label : labels)
    if (label != 0 && label != 1) throw InputError("StumpEnsemble: labels must be 0/1");

  std::vector<std::vector<std::size_t>> order(d, std::vector<std::size_t>(n));
  for (std::size_t f = 0; f < d; ++f) {
    std::iota(order[f].begin(), order[f].end(), 0);
    std::stable_sort(order[f].begin(), order[f].end(),
                     [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
  }

  StumpEnsemble model;
  model.learning_rate_ = options.learning_rate;
  std::vector<double> margin(n, 0.0), grad(n), hess(n);
  const double lambda = options.l2;
  for (std::size_t round = 0; round < options.rounds; ++round) {
    double g_total = 0.0, h_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-margin[i]));
      grad[i] = p - labels[i];
      hess[i] = std::max(p * (1.0 - p), 1e-16);
      g_total += grad[i];
      h_total += hess[i];
    }
    const double parent = g_total * g_total / (h_total + lambda);
    Stump best;
    best.threshold = std::numeric_limits<double>::infinity();
    best.left = best.right = -g_total / (h_total + lambda);
    double best_gain = 0.0;
    for (std::size_t f = 0; f < d; ++f) {
      double gl = 0.0, hl = 0.0;
      const auto& ord = order[f];
      for (std::size_t pos = 0; pos + 1 < n; ++pos) {
        gl += grad[ord[pos]];
        hl += hess[ord[pos]];
        const double lo = x(ord[pos], f);
        const double hi = x(ord[pos + 1], f);
        if (!(lo < hi)) continue;
        const double gr = g_total - gl, hr = h_total - hl;
        const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best.feature = f;
          best.threshold = lo + 0.5 * (hi - lo);
          best.left = -gl / (hl + lambda);
          best.right = -gr / (hr + lambda);
        }
      }
    }
    model.stumps_.push_back(best);
    for (std::size_t i = 0; i < n; ++i)
      margin[i] += options.learning_rate * (x(i, best.feature) <= best.threshold ? best.left : best.right);
  }
  return model;
}

double StumpEnsemble::margin(std::span<const double> row) const {
  double m = 0.0;
  for (const Stump& s : stumps_) m += learning_rate_ * (row[s.feature] <= s.threshold ? s.left : s.right);
  return m;
}

std::vector<int> StumpEnsemble::predict(const Tensor& x) const {
  std::vector<int> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = margin(x.row(i)) > 0.0 ? 1 : 0;
  return out;
}

ProbeSplit balanced_split(const LabelVector& y, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ParameterError("test_fraction must be in (0, 1)");
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(y.num_classes));
  for (std::size_t i = 0; i < y.size(); ++i) by_class[static_cast<std::size_t>(y[i])].push_back(i);
  std::size_t smallest = y.size();
  for (auto& members : by_class) {
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.index(i)]);
    if (!members.empty()) smallest = std::min(smallest, members.size());
  }
  const auto per_class = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(smallest)));
  ProbeSplit split;
  for (const auto& members : by_class) {
    if (members.empty()) continue;
    split.test.insert(split.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(per_class));
    split.train.insert(split.train.end(), members.begin() + static_cast<std::ptrdiff_t>(per_class), members.end());
  }
  std::ranges::sort(split.train);
  std::ranges::sort(split.test);
  return split;
}

double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth, int num_classes) {
  if (predicted.size() != truth.size() || truth.empty()) throw DimensionError("balanced_accuracy: size mismatch");
  std::vector<std::size_t> hit(static_cast<std::size_t>(num_classes)), total(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto c = static_cast<std::size_t>(truth[i]);
    ++total[c];
    if (predicted[i] == truth[i]) ++hit[c];
  }
  double sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < total.size(); ++c) {
    if (total[c] == 0) continue;
    sum += static_cast<double>(hit[c]) / static_cast<double>(total[c]);
    ++present;
  }
  return sum / present;
}

double probe_attack(const Tensor& observed, const LabelVector& y, const ProbeSplit& split,
                    const ProbeOptions& options) {
  require_binary(y, "probe_attack");
  if (observed.rows() != y.size()) throw DimensionError("probe_attack: row/label count mismatch");
  if (split.train.empty() || split.test.empty()) throw InputError("probe_attack: empty train or test split");
  std::vector<std::size_t> a = split.train, b = split.test;
  std::ranges::sort(a);
  std::ranges::sort(b);
  std::vector<std::size_t> overlap;
  std::ranges::set_intersection(a, b, std::back_inserter(overlap));
  if (!overlap.empty()) throw InputError("probe_attack: train and test splits overlap");
  for (std::size_t i : a)
    if (i >= y.size()) throw InputError("probe_attack: split index out of range");
  for (std::size_t i : b)
    if (i >= y.size()) throw InputError("probe_attack: split index out of range");
  const LabelVector y_train = y.gather(split.train);
  const LabelVector y_test = y.gather(split.test);
  if (y_train.classes_present() < 2 || y_test.classes_present() < 2)
    throw InputError("probe_attack: each split needs both classes");
  const StumpEnsemble model = StumpEnsemble::fit(gather_rows(observed, split.train), y_train.labels, options);
  return balanced_accuracy(model.predict(gather_rows(observed, split.test)), y_test.labels, 2);
}

// ---------------------------------------------------------------------------
// Reports

double AttackMetrics::worst() const {
  std::optional<double> best;
  for (const auto& m : {spectral_auc, norm_auc, kmeans_acc, probe_acc})
    if (m) best = best ? std::max(*best, *m) : *m;
  if (!best) throw InputError("AttackMetrics: no metric recorded");
  return *best;
}

void AttackMetrics::merge_max(const AttackMetrics& other) {
  auto merge = [](std::optional<double>& mine, const std::optional<double>& theirs) {
    if (theirs) mine = mine ? std::max(*mine, *theirs) : *theirs;
  };
  merge(spectral_auc, other.spectral_auc);
  merge(norm_auc, other.norm_auc);
  merge(kmeans_acc, other.kmeans_acc);
  merge(probe_acc, other.probe_acc);
}

AttackMetrics evaluate_observable(const Tensor& data, const LabelVector& y, const AttackOptions& options) {
  if (y.classes_present() < 2) throw UndefinedMetricError("evaluate_observable: single class");
  AttackMetrics m;
  m.kmeans_acc = kmeans_attack(data, y, options.seed);
  if (y.num_classes == 2) {
    m.spectral_auc = spectral_attack(data, y);
    m.norm_auc = norm_attack(data, y);
    if (options.probe) {
      const ProbeSplit split = balanced_split(y, options.probe_test_fraction, options.seed);
      m.probe_acc = probe_attack(data, y, split);
    }
  }
  return m;
}

void AttackReport::add(std::int64_t step, std::string observable, AttackMetrics metrics) {
  records.push_back({step, std::move(observable), metrics});
}

LeakageSummary leakage_summary(const AttackReport& report) {
  if (report.empty()) throw InputError("leakage_summary: empty report");
  LeakageSummary out;
  for (const auto& r : report.records) {
    out.per_metric[r.observable].merge_max(r.metrics);
  }
  for (const auto& [name, metrics] : out.per_metric) out.worst[name] = metrics.worst();
  return out;
}

namespace {

nlohmann::ordered_json metrics_json(const AttackMetrics& m) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  if (m.spectral_auc) j["spectral_auc"] = *m.spectral_auc;
  if (m.norm_auc) j["norm_auc"] = *m.norm_auc;
  if (m.kmeans_acc) j["kmeans_acc"] = *m.kmeans_acc;
  if (m.probe_acc) j["probe_acc"] = *m.probe_acc;
  return j;
}

AttackMetrics metrics_from_json(const nlohmann::json& j) {
  AttackMetrics m;
  auto read = [&](const char* key, std::optional<double>& slot) {
    if (j.contains(key)) slot = j.at(key).get<double>();
  };
  read("spectral_auc", m.spectral_auc);
  read("norm_auc", m.norm_auc);
  read("kmeans_acc", m.kmeans_acc);
  read("probe_acc", m.probe_acc);
  return m;
}

}  // namespace

std::string report_to_jsonl(const AttackReport& report) {
  std::string out;
  for (const auto& r : report.records) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["observable"] = r.observable;
    j["metrics"] = metrics_json(r.metrics);
    out += j.dump();
    out += '\n';
  }
  return out;
}

AttackReport report_from_jsonl(std::string_view text) {
  AttackReport report;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      report.add(j.at("step").get<std::int64_t>(), j.at("observable").get<std::string>(),
                 metrics_from_json(j.at("metrics")));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("attack record: ") + e.what(), line_no);
    }
  }
  return report;
}

std::string summary_to_json(const LeakageSummary& summary) {
  nlohmann::ordered_json j;
  for (const auto& [name, metrics] : summary.per_metric) {
    j[name] = metrics_json(metrics);
    j[name]["worst"] = summary.worst.at(name);
  }
  return j.dump(2);
}

}  // namespace splitveil
