// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference gradient oracle, independent of the tape.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ifal/nn/autograd.hpp"
#include "ifal/nn/ops.hpp"

namespace ifal::testing {

// ||a - n|| / max(||a||, ||n||), or 0 when both norms are below `floor`.
inline double relative_error(const nn::Tensor& analytic, const nn::Tensor& numeric, double floor = 1e-12) {
  double diff = 0.0, na = 0.0, nn_ = 0.0;
  for (std::size_t i = 0; i < analytic.numel(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn_ += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(std::max(na, nn_));
  if (denom < floor) return std::sqrt(diff);
  return std::sqrt(diff) / denom;
}

// Perturbs `value` in place entry by entry; `eval` recomputes the scalar loss.
inline nn::Tensor numeric_gradient(nn::Tensor& value, const std::function<double()>& eval, double h = 1e-5) {
  nn::Tensor g(value.shape(), 0.0);
  for (std::size_t i = 0; i < value.numel(); ++i) {
    const double saved = value[i];
    value[i] = saved + h;
    const double up = eval();
    value[i] = saved - h;
    const double down = eval();
    value[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Checks d(loss)/d(inputs) for a function of leaf Vars. Returns the worst
// relative error over inputs.
inline double gradcheck(std::vector<nn::Var> inputs, const std::function<nn::Var(const std::vector<nn::Var>&)>& f,
                        double h = 1e-5) {
  for (auto& in : inputs) in.node()->grad = nn::Tensor();
  nn::backward(f(inputs));
  double worst = 0.0;
  for (auto& in : inputs) {
    nn::Tensor analytic = in.grad().empty() ? nn::Tensor(in.shape(), 0.0) : in.grad();
    nn::Tensor numeric = numeric_gradient(in.node()->value, [&] { return f(inputs).value().item(); }, h);
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

// Reduces an arbitrary tensor to a scalar through fixed pseudo-random weights so
// that gradient checks are not blind to sign or permutation errors.
inline nn::Var weighted_sum(const nn::Var& x, unsigned salt = 1) {
  nn::Tensor w({x.rows(), x.cols()});
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i + 1) * (salt + 0.3)) + 0.1;
  return nn::sum(nn::mul(nn::reshape(x, {x.rows(), x.cols()}), nn::constant(std::move(w))));
}

}  // namespace ifal::testing
