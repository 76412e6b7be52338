// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace splitveil {

/// Dense row-major matrix of doubles. Every numeric quantity in the library
/// (activations, gradients, weights, mixing weights) travels as a Tensor.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool same_shape(const Tensor& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const Tensor&) const = default;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double scale);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double scale, Tensor a);

/// a · b
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// aᵀ · b
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor hadamard(const Tensor& a, const Tensor& b);

/// y += scale * x
void axpy(double scale, const Tensor& x, Tensor& y);

/// Selects the given rows, in order.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);

double dot(const Tensor& a, const Tensor& b);
double frobenius_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
/// Largest squared L2 norm over rows.
double max_row_sq_norm(const Tensor& a);
std::vector<double> row_norms(const Tensor& a);

bool all_finite(const Tensor& a) noexcept;
/// Throws InputError naming `what` if any entry is NaN or infinite.
void require_finite(const Tensor& a, std::string_view what);
/// Throws DimensionError unless a and b have the same shape.
void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what);

}  // namespace splitveil
