// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/stats.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "splitveil/error.hpp"

namespace splitveil {

LabelVector::LabelVector(std::vector<int> labels_in, int num_classes_in)
    : labels(std::move(labels_in)), num_classes(num_classes_in) {
  if (num_classes < 2) throw InputError("LabelVector: need at least 2 classes");
  for (int l : labels) {
    if (l < 0 || l >= num_classes) {
      throw InputError("LabelVector: label " + std::to_string(l) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    }
  }
}

LabelVector LabelVector::gather(std::span<const std::size_t> indices) const {
  LabelVector out;
  out.num_classes = num_classes;
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  return out;
}

std::vector<std::size_t> LabelVector::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

int LabelVector::classes_present() const {
  const auto counts = class_counts();
  return static_cast<int>(std::ranges::count_if(counts, [](std::size_t c) { return c > 0; }));
}

Tensor LabelVector::one_hot() const {
  Tensor out(labels.size(), static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// PCA

namespace {

Eigen::MatrixXd centered(const Tensor& x) {
  Eigen::MatrixXd m(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) m(i, j) = x(i, j);
  m.rowwise() -= m.colwise().mean();
  return m;
}

void check_pca_args(const Tensor& x, std::size_t k) {
  if (x.rows() < 2) throw InputError("pca: need at least 2 rows");
  if (k > std::min(x.rows(), x.cols())) {
    throw DimensionError("pca: k=" + std::to_string(k) + " exceeds min(N, d)=" +
                         std::to_string(std::min(x.rows(), x.cols())));
  }
}

}  // namespace

Tensor pca_components(const Tensor& x, std::size_t k) {
  check_pca_args(x, k);
  const Eigen::MatrixXd xc = centered(x);
  const std::size_t d = x.cols();
  Tensor comps(k, d);
  if (xc.squaredNorm() == 0.0) return comps;

  const Eigen::MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw InputError("pca: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  for (std::size_t c = 0; c < k; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - c));
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
      if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
    if (v(arg) < 0) v = -v;
    for (std::size_t j = 0; j < d; ++j) comps(c, j) = v(static_cast<Eigen::Index>(j));
  }
  return comps;
}

Tensor pca_project(const Tensor& x, std::size_t k) {
  const Tensor comps = pca_components(x, k);
  Tensor xc = x;
  const std::size_t n = x.rows();
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) xc(i, j) -= mean;
  }
  return matmul_nt(xc, comps);
}

// ---------------------------------------------------------------------------
// k-means

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Assigns each row to its nearest center (lowest index on ties); returns cost.
double assign(const Tensor& x, const Tensor& centers, std::vector<int>& out) {
  double cost = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t c = 0; c < centers.rows(); ++c) {
      const double dist = sq_dist(x.row(i), centers.row(c));
      if (dist < best) {
        best = dist;
        arg = static_cast<int>(c);
      }
    }
    out[i] = arg;
    cost += best;
  }
  return cost;
}

Tensor seed_plus_plus(const Tensor& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows();
  Tensor centers(k, x.cols());
  std::size_t first = rng.index(n);
  std::ranges::copy(x.row(first), centers.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(x.row(i), centers.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double cum = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cum += d2[i];
        if (cum > u && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    std::ranges::copy(x.row(pick), centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(x.row(i), centers.row(c)));
  }
  return centers;
}

}  // namespace

KMeansResult kmeans(const Tensor& x, std::size_t k, Rng& rng, const KMeansOptions& opts) {
  if (k == 0) throw InputError("kmeans: k must be at least 1");
  if (x.rows() < k) {
    throw InputError("kmeans: " + std::to_string(x.rows()) + " rows < k=" + std::to_string(k));
  }
  KMeansResult res;
  res.centers = seed_plus_plus(x, k, rng);
  res.assignments.assign(x.rows(), 0);
  double cost = assign(x, res.centers, res.assignments);
  res.cost_history.push_back(cost);

  std::vector<int> next(x.rows());
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    // Update step; an empty cluster keeps its previous center.
    Tensor sums(k, x.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto c = static_cast<std::size_t>(res.assignments[i]);
      ++counts[c];
      auto srow = sums.row(c);
      auto xrow = x.row(i);
      for (std::size_t j = 0; j < x.cols(); ++j) srow[j] += xrow[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto crow = res.centers.row(c);
      auto srow = sums.row(c);
      for (std::size_t j = 0; j < x.cols(); ++j) crow[j] = srow[j] / static_cast<double>(counts[c]);
    }
    const double new_cost = assign(x, res.centers, next);
    res.cost_history.push_back(new_cost);
    const bool unchanged = next == res.assignments;
    res.assignments.swap(next);
    const bool flat = (cost - new_cost) <= opts.rel_tol * cost;
    cost = new_cost;
    if (unchanged || flat) break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// ROC AUC

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InputError("roc_auc: labels must be binary");
    n_pos += static_cast<std::size_t>(l);
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("roc_auc: both classes must be present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney U with mid-ranks for ties.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] == 1) rank_sum_pos += mid_rank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

// ---------------------------------------------------------------------------
// Linear head

Tensor softmax_rows(const Tensor& logits) {
  Tensor p = logits;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto row = p.row(i);
    const double mx = *std::ranges::max_element(row);
    double z = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      z += v;
    }
    for (double& v : row) v /= z;
  }
  return p;
}

Tensor LinearHead::logits(const Tensor& h) const {
  if (h.cols() != dim()) throw DimensionError("LinearHead: feature dimension mismatch");
  Tensor out = matmul_nt(h, weights);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t c = 0; c < out.cols(); ++c) out(i, c) += bias[c];
  return out;
}

Tensor LinearHead::probabilities(const Tensor& h) const { return softmax_rows(logits(h)); }

std::vector<int> LinearHead::predict(const Tensor& h) const {
  const Tensor z = logits(h);
  std::vector<int> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    out[i] = static_cast<int>(std::ranges::max_element(row) - row.begin());
  }
  return out;
}

namespace {

double row_log_sum_exp(std::span<const double> row) {
  const double mx = *std::ranges::max_element(row);
  double z = 0.0;
  for (double v : row) z += std::exp(v - mx);
  return mx + std::log(z);
}

void check_head_inputs(const LinearHead& head, const Tensor& h, const LabelVector& y) {
  if (h.rows() != y.size()) throw DimensionError("head: row count does not match label count");
  if (static_cast<std::size_t>(y.num_classes) != head.num_classes())
    throw DimensionError("head: class count mismatch");
}

}  // namespace

double cross_entropy(const LinearHead& head, const Tensor& h, const LabelVector& y) {
  check_head_inputs(head, h, y);
  const Tensor z = head.logits(h);
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i)
    total += row_log_sum_exp(z.row(i)) - z(i, static_cast<std::size_t>(y[i]));
  return total / static_cast<double>(z.rows());
}

HeadGradient cross_entropy_grad(const LinearHead& head, const Tensor& h, const LabelVector& y) {
  check_head_inputs(head, h, y);
  const std::size_t n = h.rows();
  const Tensor z = head.logits(h);
  HeadGradient g;
  Tensor delta = softmax_rows(z);  // becomes (P - Y) / N
  for (std::size_t i = 0; i < n; ++i) {
    const auto yi = static_cast<std::size_t>(y[i]);
    g.loss += row_log_sum_exp(z.row(i)) - z(i, yi);
    // p_y - 1 written as minus the other probabilities; the direct form loses
    // all precision once the head is confident.
    double others = 0.0;
    for (std::size_t c = 0; c < delta.cols(); ++c)
      if (c != yi) others += delta(i, c);
    delta(i, yi) = -others;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  g.loss *= inv_n;
  delta *= inv_n;
  g.d_weights = matmul_tn(delta, h);
  g.d_bias.assign(head.num_classes(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < delta.cols(); ++c) g.d_bias[c] += delta(i, c);
  g.d_h = matmul(delta, head.weights);
  return g;
}

LinearHead fit_linear_head(const Tensor& h, const LabelVector& y, std::size_t iters, double lr, double l2) {
  if (h.rows() == 0) throw InputError("fit_linear_head: empty input");
  if (l2 < 0.0) throw ParameterError("fit_linear_head: l2 must be non-negative");
  LinearHead head{Tensor(static_cast<std::size_t>(y.num_classes), h.cols()),
                  std::vector<double>(static_cast<std::size_t>(y.num_classes), 0.0)};
  // The loss is L-smooth with L <= mean(|h|^2 + 1) / 2 + l2; stepping past 1/L
  // diverges once activations grow.
  const double smooth = 0.5 * ([&] { const double f = frobenius_norm(h); return f * f; }() / static_cast<double>(h.rows()) + 1.0) + l2;
  lr = std::min(lr, 1.0 / smooth);
  for (std::size_t it = 0; it < iters; ++it) {
    const HeadGradient g = cross_entropy_grad(head, h, y);
    if (l2 > 0.0) head.weights *= 1.0 - lr * l2;
    axpy(-lr, g.d_weights, head.weights);
    for (std::size_t c = 0; c < head.bias.size(); ++c) head.bias[c] -= lr * g.d_bias[c];
  }
  return head;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw DimensionError("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace splitveil
