// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "ifal/nn/ops.hpp"
#include "ifal/nn/param_store.hpp"
#include "ifal/nn/rng.hpp"

namespace ifal::nn {

// softmax(Q K^T / sqrt(d) + M) V.
//
// `mask` is optional and either [n_q, n_k] or [n_q, 1] (broadcast over keys);
// entries are finite or -inf. A query row whose every key is masked yields a
// zero output row.
Var masked_attention(const Var& q, const Var& k, const Var& v, const Tensor* mask = nullptr);

// [sin(2^0 2pi v) .. sin(2^(B-1) 2pi v), cos(2^0 2pi v) .. cos(2^(B-1) 2pi v)].
Tensor fourier_embed(double v, std::size_t bands);

enum class Activation { kIdentity, kGelu, kSilu };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation act);
Var apply_activation(const Var& x, Activation act);

enum class Init { kLecun, kZero };

struct Linear {
  Var weight;  // [in, out]
  Var bias;    // [1, out]

  static Linear create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                       Init init = Init::kLecun);
  // Binds to parameters `prefix/w` and `prefix/b` that already exist in `store`.
  static Linear bind(const ParamStore& store, const std::string& prefix);

  Var operator()(const Var& x) const { return add_row(matmul(x, weight), bias); }
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
};

// affine -> act -> affine -> ... ; no activation after the final layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<Linear> layers, Activation act) : layers_(std::move(layers)), act_(act) {}

  // dims = {in, hidden..., out}. `last_init` lets a final layer start at zero.
  static Mlp create(ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& dims,
                    Activation act, Rng& rng, Init last_init = Init::kLecun);

  Var forward(const Var& x) const;
  const std::vector<Linear>& layers() const { return layers_; }
  Activation activation() const { return act_; }

 private:
  std::vector<Linear> layers_;
  Activation act_ = Activation::kGelu;
};

inline Var mlp_forward(const Var& x, const Mlp& mlp) { return mlp.forward(x); }

}  // namespace ifal::nn
