// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "ifal/nn/autograd.hpp"

namespace ifal::nn {

// Logit value standing in for -inf. Rows whose every logit is at or below
// kMaskedLogit / 2 are treated as fully masked.
inline constexpr double kMaskedLogit = -1e9;

// Differentiable operations. All treat their operands as matrices (see Tensor) and
// throw DimensionError on incompatible shapes and NumericError on non-finite output.

Var matmul(const Var& a, const Var& b);     // [m,k] x [k,n]
Var matmul_bt(const Var& a, const Var& b);  // [m,k] x [n,k]^T
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // broadcast a [1,n] row over every row of a
Var mul_col(const Var& a, const Var& col);  // broadcast an [m,1] column over every column of a
Var mul_scalar(const Var& a, const Var& s); // s has one element
Var scale(const Var& a, double s);

Var gelu(const Var& a);  // tanh approximation
Var silu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);

// Row-wise softmax. A row is fully masked when `live` says so or when all of its
// logits are <= kMaskedLogit / 2; such rows produce zeros and pass no gradient.
Var softmax_rows(const Var& a, const std::vector<bool>* live = nullptr);

// Per-row standardization to zero mean / unit variance, no affine part.
Var layer_norm_rows(const Var& a, double eps = 1e-5);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);
Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
Var reshape(const Var& a, Shape shape);

Var sum(const Var& a);
Var mean(const Var& a);
Var mse(const Var& a, const Var& b);  // mean of squared differences

// Spatial helpers for [h*w, channels] feature maps stored pixel-major.
Var im2col3x3(const Var& a, std::size_t h, std::size_t w);  // -> [h*w, 9*channels], zero padded
Var avg_pool2x2(const Var& a, std::size_t h, std::size_t w);
Var upsample2x(const Var& a, std::size_t h, std::size_t w);

}  // namespace ifal::nn
