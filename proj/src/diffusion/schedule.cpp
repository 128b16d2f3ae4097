// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "ifal/errors.hpp"

namespace ifal::diffusion {

void to_json(nlohmann::json& j, const ScheduleConfig& c) {
  j = {{"steps", c.steps}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end},
       {"rescale_to_steps", c.rescale_to_steps}};
}

void from_json(const nlohmann::json& j, ScheduleConfig& c) {
  c = ScheduleConfig{};
  c.steps = j.value("steps", c.steps);
  c.beta_start = j.value("beta_start", c.beta_start);
  c.beta_end = j.value("beta_end", c.beta_end);
  c.rescale_to_steps = j.value("rescale_to_steps", c.rescale_to_steps);
}

NoiseSchedule::NoiseSchedule(const ScheduleConfig& config) {
  if (config.steps < 1) throw ValidationError("schedule.steps must be at least 1");
  const double k = config.rescale_to_steps ? 1000.0 / static_cast<double>(config.steps) : 1.0;
  const double b0 = config.beta_start * k, b1 = config.beta_end * k;
  if (!(b0 > 0.0 && b1 < 1.0 && b0 <= b1)) {
    throw ValidationError("schedule betas must satisfy 0 < beta_start <= beta_end < 1 after rescaling");
  }
  const std::size_t T = config.steps;
  betas_.assign(T + 1, 0.0);
  alpha_bars_.assign(T + 1, 1.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    betas_[t] = b0 + (b1 - b0) * frac;
    alpha_bars_[t] = alpha_bars_[t - 1] * (1.0 - betas_[t]);
  }
}

void NoiseSchedule::check_t(std::size_t t) const {
  if (t < 1 || t > steps()) {
    throw ValidationError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  }
}

nn::Tensor NoiseSchedule::q_sample(const nn::Tensor& x0, std::size_t t, const nn::Tensor& eps) const {
  check_t(t);
  if (x0.shape() != eps.shape()) throw DimensionError("q_sample: noise shape differs from x0");
  const double a = std::sqrt(alpha_bars_[t]), b = std::sqrt(1.0 - alpha_bars_[t]);
  nn::Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

std::vector<std::size_t> NoiseSchedule::respaced(std::size_t count) const {
  const std::size_t T = steps();
  count = std::clamp<std::size_t>(count, 1, T);
  std::vector<std::size_t> ts;
  for (std::size_t i = 0; i < count; ++i) {
    // Round T * (count - i) / count; strictly decreasing and ends at >= 1.
    const std::size_t t = (T * (count - i) + count / 2) / count;
    ts.push_back(std::max<std::size_t>(t, 1));
  }
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

nn::Tensor NoiseSchedule::reverse_step(const nn::Tensor& x_t, std::size_t t, std::size_t s, const nn::Tensor& eps_hat,
                                       const nn::Tensor& z, double clip) const {
  check_t(t);
  if (s >= t) throw ValidationError("reverse_step needs s < t");
  if (x_t.shape() != eps_hat.shape() || x_t.shape() != z.shape()) throw DimensionError("reverse_step shapes differ");
  const double ab_t = alpha_bars_[t], ab_s = alpha_bars_[s];
  const double alpha = ab_t / ab_s, beta = 1.0 - alpha;
  const double c0 = std::sqrt(ab_s) * beta / (1.0 - ab_t);
  const double ct = std::sqrt(alpha) * (1.0 - ab_s) / (1.0 - ab_t);
  const double sigma = std::sqrt(beta * (1.0 - ab_s) / (1.0 - ab_t));
  nn::Tensor out(x_t.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double x0 = (x_t[i] - std::sqrt(1.0 - ab_t) * eps_hat[i]) / std::sqrt(ab_t);
    if (clip > 0.0) x0 = std::clamp(x0, -clip, clip);
    out[i] = c0 * x0 + ct * x_t[i] + sigma * z[i];
  }
  nn::require_finite(out, "reverse diffusion step");
  return out;
}

}  // namespace ifal::diffusion
