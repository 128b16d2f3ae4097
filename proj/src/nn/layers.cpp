// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/nn/layers.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <numbers>

#include "ifal/errors.hpp"

namespace ifal::nn {

Var masked_attention(const Var& q, const Var& k, const Var& v, const Tensor* mask) {
  const std::size_t n_q = q.rows(), n_k = k.rows(), d = q.cols();
  if (d == 0) throw DimensionError("masked_attention: zero head dimension");
  if (k.cols() != d) throw DimensionError("masked_attention: Q and K widths differ");
  if (v.rows() != n_k) throw DimensionError("masked_attention: K and V row counts differ");
  require_finite(q.value(), "attention query");
  require_finite(k.value(), "attention key");
  require_finite(v.value(), "attention value");

  Var logits = scale(matmul_bt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  if (!mask) return matmul(softmax_rows(logits), v);

  const bool broadcast = mask->cols() == 1 && n_k != 1;
  if (mask->rows() != n_q || (!broadcast && mask->cols() != n_k)) {
    throw DimensionError("masked_attention: mask " + shape_str(mask->shape()) + " for " + std::to_string(n_q) +
                         " queries and " + std::to_string(n_k) + " keys");
  }
  Tensor additive({n_q, n_k});
  std::vector<bool> live(n_q, false);
  for (std::size_t i = 0; i < n_q; ++i) {
    for (std::size_t j = 0; j < n_k; ++j) {
      const double m = broadcast ? (*mask)(i, 0) : (*mask)(i, j);
      if (std::isnan(m) || m == std::numeric_limits<double>::infinity()) {
        throw NumericError("attention mask entries must be finite or -inf");
      }
      const double a = std::isinf(m) ? kMaskedLogit : std::max(m, kMaskedLogit);
      additive(i, j) = a;
      if (a > kMaskedLogit / 2) live[i] = true;
    }
  }
  return matmul(softmax_rows(add(logits, constant(std::move(additive))), &live), v);
}

Tensor fourier_embed(double v, std::size_t bands) {
  if (bands == 0) throw ValidationError("fourier_embed needs at least one band");
  Tensor out({2 * bands});
  double freq = 2.0 * std::numbers::pi;
  for (std::size_t j = 0; j < bands; ++j) {
    out[j] = std::sin(freq * v);
    out[bands + j] = std::cos(freq * v);
    freq *= 2.0;
  }
  return out;
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "gelu") return Activation::kGelu;
  if (name == "silu") return Activation::kSilu;
  throw ValidationError("unknown activation '" + name + "'");
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kIdentity: return "identity";
    case Activation::kGelu: return "gelu";
    case Activation::kSilu: return "silu";
  }
  return "?";
}

Var apply_activation(const Var& x, Activation act) {
  switch (act) {
    case Activation::kIdentity: return x;
    case Activation::kGelu: return gelu(x);
    case Activation::kSilu: return silu(x);
  }
  return x;
}

Linear Linear::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                      Init init) {
  Tensor w({in, out}, 0.0);
  if (init == Init::kLecun) w = rng.normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
  Linear l;
  l.weight = store.add(prefix + "/w", std::move(w));
  l.bias = store.add(prefix + "/b", Tensor({1, out}, 0.0));
  return l;
}

Linear Linear::bind(const ParamStore& store, const std::string& prefix) {
  return Linear{store.get(prefix + "/w"), store.get(prefix + "/b")};
}

Mlp Mlp::create(ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& dims, Activation act,
                Rng& rng, Init last_init) {
  if (dims.size() < 2) throw ValidationError("an MLP needs at least input and output widths");
  std::vector<Linear> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    layers.push_back(Linear::create(store, prefix + "/l" + std::to_string(i), dims[i], dims[i + 1], rng,
                                    last ? last_init : Init::kLecun));
  }
  return Mlp(std::move(layers), act);
}

Var Mlp::forward(const Var& x) const {
  if (layers_.empty()) return x;
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (h.cols() != layers_[i].in_features()) {
      throw DimensionError("mlp layer " + std::to_string(i) + " expects width " +
                           std::to_string(layers_[i].in_features()) + ", got " + std::to_string(h.cols()));
    }
    h = layers_[i](h);
    if (i + 1 < layers_.size()) h = apply_activation(h, act_);
  }
  return h;
}

}  // namespace ifal::nn
