// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <json.hpp>

#include "ifal/nn/tensor.hpp"

namespace ifal::diffusion {

struct ScheduleConfig {
  std::size_t steps = 200;  // T
  double beta_start = 1e-4;
  double beta_end = 0.02;
  // Multiplies both endpoints by 1000/T so that a short chain still ends near
  // pure noise.
  bool rescale_to_steps = true;
};

void to_json(nlohmann::json& j, const ScheduleConfig& c);
void from_json(const nlohmann::json& j, ScheduleConfig& c);

// Linear beta schedule indexed t = 1..T; index 0 is the clean state (alpha_bar = 1).
class NoiseSchedule {
 public:
  explicit NoiseSchedule(const ScheduleConfig& config = {});

  std::size_t steps() const { return betas_.size() - 1; }
  double beta(std::size_t t) const { return betas_.at(t); }
  double alpha(std::size_t t) const { return 1.0 - betas_.at(t); }
  double alpha_bar(std::size_t t) const { return alpha_bars_.at(t); }

  // sqrt(abar_t) x0 + sqrt(1 - abar_t) eps. Throws ValidationError for t outside [1, T].
  nn::Tensor q_sample(const nn::Tensor& x0, std::size_t t, const nn::Tensor& eps) const;

  // Evenly spaced descending timesteps from T to 1 (count clamped to [1, T]).
  std::vector<std::size_t> respaced(std::size_t count) const;

  // One ancestral step from t to s < t given the predicted noise: posterior
  // mean plus sqrt(variance) * z. x0 estimates are clipped to [-clip, clip] when clip > 0.
  nn::Tensor reverse_step(const nn::Tensor& x_t, std::size_t t, std::size_t s, const nn::Tensor& eps_hat,
                          const nn::Tensor& z, double clip) const;

 private:
  void check_t(std::size_t t) const;

  std::vector<double> betas_;       // [0] unused
  std::vector<double> alpha_bars_;  // [0] = 1
};

}  // namespace ifal::diffusion
