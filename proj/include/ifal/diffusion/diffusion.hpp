// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "ifal/adapter/adapter.hpp"
#include "ifal/diffusion/denoiser.hpp"
#include "ifal/diffusion/schedule.hpp"
#include "ifal/nn/adamw.hpp"
#include "ifal/nn/rng.hpp"

namespace ifal::diffusion {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 16;
  std::size_t steps = 2000;
  double p_drop_local = 0.15;
  double p_drop_global = 0.30;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct SampleConfig {
  std::size_t steps = 50;
  double cfg_scale = 7.5;
  std::uint64_t seed = 0;
  double clip_x0 = 1.0;  // predicted x0 is clipped to [-clip, clip]; 0 disables

  void validate() const;
};

void to_json(nlohmann::json& j, const SampleConfig& c);
void from_json(const nlohmann::json& j, SampleConfig& c);

// Encoded global caption y plus instance conditions c.
struct Condition {
  nn::Tensor context;  // caption_context(y)
  std::vector<text::EncodedText> instance_texts;
  std::vector<layout::BBox> boxes;

  bool has_instances() const { return !instance_texts.empty(); }
};

struct TrainExample {
  nn::Tensor x0;  // [cells, latent_channels]
  Condition cond;
};

struct DropDecision {
  bool global = false;
  bool local = false;
};

// Draws the global decision then the local one, independently.
DropDecision draw_dropout(nn::Rng& rng, double p_drop_global, double p_drop_local);

// Replaces the caption by the null caption and/or the instance set by the empty set.
Condition apply_dropout(const Condition& cond, DropDecision drop, const Condition& null_cond);

inline Condition cfg_dropout(nn::Rng& rng, const Condition& cond, const Condition& null_cond, const TrainConfig& cfg) {
  return apply_dropout(cond, draw_dropout(rng, cfg.p_drop_global, cfg.p_drop_local), null_cond);
}

struct NoiseDraw {
  std::size_t t = 1;
  nn::Tensor eps;
};

NoiseDraw draw_noise(nn::Rng& rng, const NoiseSchedule& schedule, const nn::Shape& shape);

// Noise prediction; the adapter is consulted only when it is given and the
// condition has instances. `sink` receives per-site adapter diagnostics.
nn::Var predict_noise(const ToyDenoiser& net, const adapter::IFAdapter* adapter, const nn::Var& x_t, std::size_t t,
                      const Condition& cond, std::vector<adapter::IsmRecord>* sink = nullptr);

// MSE between the drawn noise and the prediction at the noised example.
nn::Var loss_ldm(const ToyDenoiser& net, const NoiseSchedule& schedule, const TrainExample& ex, const NoiseDraw& noise);
nn::Var loss_ifa(const ToyDenoiser& net, const adapter::IFAdapter& adapter, const NoiseSchedule& schedule,
                 const TrainExample& ex, const NoiseDraw& noise);

// eps_hat = (1 - s) eps_uncond + s eps_cond. Written this way so that s = 0 and
// s = 1 return exactly the unconditional and conditional predictions.
nn::Tensor guided_noise(const nn::Tensor& eps_uncond, const nn::Tensor& eps_cond, double scale);

struct SampleTrace {
  std::vector<nn::Tensor> latents;              // x_T, then x after every step
  std::vector<adapter::IsmRecord> final_ism;    // conditional pass of the last step
};

// Ancestral sampling with classifier-free guidance against `null_cond`.
nn::Tensor sample(const ToyDenoiser& net, const adapter::IFAdapter* adapter, const NoiseSchedule& schedule,
                  const Condition& cond, const Condition& null_cond, const SampleConfig& config,
                  SampleTrace* trace = nullptr);

// Same chain using only the prediction for `cond` (no guidance pass).
nn::Tensor sample_unguided(const ToyDenoiser& net, const adapter::IFAdapter* adapter, const NoiseSchedule& schedule,
                           const Condition& cond, const SampleConfig& config);

struct StepLog {
  std::size_t step = 0;
  double loss = 0.0;
  double lambda = 0.0;  // mean adapter gate, 0 without adapter
};

// Runs `config.steps` AdamW steps over minibatches drawn with replacement.
// Without an adapter this is base training on loss_ldm; with one, the base
// must already be frozen and loss_ifa is used. Throws NumericError on a
// non-finite loss.
void train(nn::ParamStore& store, const ToyDenoiser& net, const adapter::IFAdapter* adapter,
           const NoiseSchedule& schedule, std::span<const TrainExample> data, const Condition& null_cond,
           const TrainConfig& config, const std::function<void(const StepLog&)>& on_step = {});

}  // namespace ifal::diffusion
