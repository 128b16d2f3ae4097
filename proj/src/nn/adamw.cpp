// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/nn/adamw.hpp"

#include <cmath>

#include "ifal/errors.hpp"

namespace ifal::nn {

void adamw_step(ParamStore& store, AdamWState& state) {
  const auto names = store.names();
  for (const auto& name : names) {
    if (!store.frozen(name) && store.get(name).grad().empty()) {
      throw UsageError("parameter '" + name + "' has no gradient for this step");
    }
  }

  const AdamWConfig& cfg = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  for (const auto& name : names) {
    if (store.frozen(name)) continue;
    const Tensor& g = store.get(name).grad();
    require_finite(g, name.c_str());
    Tensor& p = store.mutable_value(name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, p.shape(), 0.0);
    auto [v_it, v_new] = state.second_moment.try_emplace(name, p.shape(), 0.0);
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    if (m.shape() != p.shape() || v.shape() != p.shape()) {
      throw DimensionError("optimizer moments for '" + name + "' do not match the parameter");
    }
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= cfg.lr * cfg.weight_decay * p[i];
      p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
  store.clear_grad();
}

}  // namespace ifal::nn
