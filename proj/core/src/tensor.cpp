// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "splitveil/error.hpp"

namespace splitveil {

namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t d = n == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(n * d);
  for (const auto& r : rows) {
    if (r.size() != d) throw DimensionError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor(n, d, std::move(data));
}

Tensor Tensor::row_vector(std::span<const double> values) {
  return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "tensor subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(double scale, Tensor a) { return a *= scale; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_str(a) + " * " + shape_str(b));
  }
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + shape_str(a) + " * (" + shape_str(b) + ")^T");
  }
  Tensor out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      out(i, j) = s;
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: (" + shape_str(a) + ")^T * " + shape_str(b));
  }
  Tensor out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  auto o = out.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

void axpy(double scale, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  auto xv = x.data();
  auto yv = y.data();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] += scale * xv[i];
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  Tensor out(indices.size(), a.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.rows()) throw InputError("gather_rows: index out of range");
    std::ranges::copy(a.row(indices[i]), out.row(i).begin());
  }
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return s;
}

double frobenius_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
  return m;
}

double max_row_sq_norm(const Tensor& a) {
  double m = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (double v : a.row(r)) s += v * v;
    m = std::max(m, s);
  }
  return m;
}

std::vector<double> row_norms(const Tensor& a) {
  std::vector<double> out(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (double v : a.row(r)) s += v * v;
    out[r] = std::sqrt(s);
  }
  return out;
}

bool all_finite(const Tensor& a) noexcept {
  return std::ranges::all_of(a.data(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Tensor& a, std::string_view what) {
  if (!all_finite(a)) throw InputError(std::string(what) + ": non-finite entry");
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape " + shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace splitveil
