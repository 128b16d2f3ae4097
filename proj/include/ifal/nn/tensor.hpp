// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ifal::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float64 tensor. A plain value type; gradient tracking lives in Var.
//
// Most of the library works with rank-2 tensors (rows x cols). A rank-1 tensor of
// length n is viewed as a 1 x n matrix, and a rank-0 tensor as 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  // Scalar value of a one-element tensor.
  double item() const;

  bool all_finite() const;

  // Same data, new shape; throws DimensionError if the element count differs.
  Tensor reshaped(Shape shape) const;

  Tensor row(std::size_t r) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Exact equality of shape and every bit of the payload.
bool bitwise_equal(const Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);

// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(const Tensor& t, const char* what);

}  // namespace ifal::nn
