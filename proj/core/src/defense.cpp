// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/defense.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "splitveil/error.hpp"

namespace splitveil {

AdversarialLoss adversarial_reg_loss(const Tensor& h, const LabelVector& y, const HeadPolicy& policy) {
  if (h.rows() != y.size()) throw DimensionError("adversarial_reg_loss: batch size mismatch");
  if (y.classes_present() < 2) {
    AdversarialLoss out;
    out.grad = Tensor(h.rows(), h.cols());
    out.skipped = true;
    return out;
  }
  return adversarial_reg_loss(h, y, fit_linear_head(h, y, policy.iters, policy.lr, policy.l2));
}

AdversarialLoss adversarial_reg_loss(const Tensor& h, const LabelVector& y, const LinearHead& head) {
  HeadGradient hg = cross_entropy_grad(head, h, y);
  AdversarialLoss out;
  out.loss = -hg.loss;
  out.grad = -1.0 * std::move(hg.d_h);
  out.head = head;
  return out;
}

namespace {

struct Centered {
  std::vector<double> dist;      // raw pairwise distances, n x n
  std::vector<double> centered;  // double-centered
  double sq_mean = 0.0;          // (1/n²) Σ centered²
};

Centered double_center(const Tensor& x) {
  const std::size_t n = x.rows();
  Centered c;
  c.dist.assign(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = j + 1; k < n; ++k) {
      double s = 0.0;
      for (std::size_t q = 0; q < x.cols(); ++q) {
        const double diff = x(j, q) - x(k, q);
        s += diff * diff;
      }
      c.dist[j * n + k] = c.dist[k * n + j] = std::sqrt(s);
    }
  }
  std::vector<double> row_mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) row_mean[j] += c.dist[j * n + k];
    grand += row_mean[j];
    row_mean[j] /= static_cast<double>(n);
  }
  grand /= static_cast<double>(n * n);
  c.centered.resize(n * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) {
      const double v = c.dist[j * n + k] - row_mean[j] - row_mean[k] + grand;
      c.centered[j * n + k] = v;
      c.sq_mean += v * v;
    }
  c.sq_mean /= static_cast<double>(n * n);
  return c;
}

double cross_mean(const Centered& a, const Centered& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.centered.size(); ++i) s += a.centered[i] * b.centered[i];
  return s / static_cast<double>(a.centered.size());
}

}  // namespace

DistanceCorrelation distance_correlation_grad(const Tensor& h, const Tensor& y) {
  if (h.rows() != y.rows()) throw DimensionError("distance_correlation: row count mismatch");
  if (h.rows() < 2) throw InputError("distance_correlation: need at least 2 rows");
  const std::size_t n = h.rows();
  DistanceCorrelation out{0.0, Tensor(n, h.cols())};
  const Centered ch = double_center(h);
  const Centered cy = double_center(y);
  const double var_h = ch.sq_mean;
  const double var_y = cy.sq_mean;
  if (var_h <= 0.0 || var_y <= 0.0) return out;
  const double cov = std::max(cross_mean(ch, cy), 0.0);
  if (cov <= 0.0) return out;
  const double value = std::sqrt(cov / std::sqrt(var_h * var_y));
  out.value = std::min(value, 1.0);

  // value = cov^½ var_h^−¼ var_y^−¼ and both moments are linear/quadratic in
  // the raw distances because double-centering is an orthogonal projection.
  const double nn = static_cast<double>(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    auto gj = out.grad.row(j);
    for (std::size_t k = 0; k < n; ++k) {
      const double dist = ch.dist[j * n + k];
      if (k == j || dist == 0.0) continue;
      const double dv_ddist = value * (0.5 * cy.centered[j * n + k] / (nn * cov) -
                                       0.5 * ch.centered[j * n + k] / (nn * var_h));
      const double w = 2.0 * dv_ddist / dist;
      for (std::size_t q = 0; q < h.cols(); ++q) gj[q] += w * (h(j, q) - h(k, q));
    }
  }
  return out;
}

double distance_correlation(const Tensor& h, const Tensor& y) {
  if (h.rows() != y.rows()) throw DimensionError("distance_correlation: row count mismatch");
  if (h.rows() < 2) throw InputError("distance_correlation: need at least 2 rows");
  const Centered ch = double_center(h);
  const Centered cy = double_center(y);
  if (ch.sq_mean <= 0.0 || cy.sq_mean <= 0.0) return 0.0;
  const double cov = std::max(cross_mean(ch, cy), 0.0);
  return std::min(std::sqrt(cov / std::sqrt(ch.sq_mean * cy.sq_mean)), 1.0);
}

double rr_keep_probability(double epsilon, int num_classes) {
  if (!(epsilon >= 0.0)) throw ParameterError("randomized response: epsilon must be >= 0");
  if (num_classes < 2) throw ParameterError("randomized response: need at least 2 classes");
  return 1.0 / (1.0 + static_cast<double>(num_classes - 1) * std::exp(-epsilon));
}

LabelVector randomized_response(const LabelVector& y, double epsilon, int num_classes, Rng& rng) {
  const double keep = rr_keep_probability(epsilon, num_classes);
  std::vector<int> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int label = y[i];
    if (label >= num_classes)
      throw InputError("randomized response: label " + std::to_string(label) + " >= K");
    if (rng.uniform() < keep) {
      out[i] = label;
      continue;
    }
    const int other = static_cast<int>(rng.index(static_cast<std::size_t>(num_classes - 1)));
    out[i] = other >= label ? other + 1 : other;
  }
  return LabelVector(std::move(out), num_classes);
}

}  // namespace splitveil
