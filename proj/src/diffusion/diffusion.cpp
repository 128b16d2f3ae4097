// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/diffusion/diffusion.hpp"

#include <cmath>

#include "ifal/errors.hpp"

namespace ifal::diffusion {

using nn::Tensor;
using nn::Var;

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(name) + " must lie in [0, 1]");
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("train.lr must be positive");
  if (batch_size == 0) throw ValidationError("train.batch_size must be positive");
  check_probability(p_drop_local, "train.p_drop_local");
  check_probability(p_drop_global, "train.p_drop_global");
  if (!(weight_decay >= 0.0)) throw ValidationError("train.weight_decay must be non-negative");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr}, {"batch_size", c.batch_size}, {"steps", c.steps}, {"p_drop_local", c.p_drop_local},
       {"p_drop_global", c.p_drop_global}, {"weight_decay", c.weight_decay}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.p_drop_local = j.value("p_drop_local", c.p_drop_local);
  c.p_drop_global = j.value("p_drop_global", c.p_drop_global);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
}

void SampleConfig::validate() const {
  if (steps < 1) throw ValidationError("sample.steps must be at least 1");
  if (!std::isfinite(cfg_scale)) throw ValidationError("sample.cfg_scale must be finite");
  if (!(clip_x0 >= 0.0)) throw ValidationError("sample.clip_x0 must be non-negative");
}

void to_json(nlohmann::json& j, const SampleConfig& c) {
  j = {{"steps", c.steps}, {"cfg_scale", c.cfg_scale}, {"seed", c.seed}, {"clip_x0", c.clip_x0}};
}

void from_json(const nlohmann::json& j, SampleConfig& c) {
  c = SampleConfig{};
  c.steps = j.value("steps", c.steps);
  c.cfg_scale = j.value("cfg_scale", c.cfg_scale);
  c.seed = j.value("seed", c.seed);
  c.clip_x0 = j.value("clip_x0", c.clip_x0);
}

DropDecision draw_dropout(nn::Rng& rng, double p_drop_global, double p_drop_local) {
  DropDecision d;
  d.global = rng.bernoulli(p_drop_global);
  d.local = rng.bernoulli(p_drop_local);
  return d;
}

Condition apply_dropout(const Condition& cond, DropDecision drop, const Condition& null_cond) {
  Condition out = cond;
  if (drop.global) out.context = null_cond.context;
  if (drop.local) {
    out.instance_texts.clear();
    out.boxes.clear();
  }
  return out;
}

NoiseDraw draw_noise(nn::Rng& rng, const NoiseSchedule& schedule, const nn::Shape& shape) {
  NoiseDraw d;
  d.t = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(schedule.steps())));
  d.eps = rng.normal_tensor(shape);
  return d;
}

Var predict_noise(const ToyDenoiser& net, const adapter::IFAdapter* adapter, const Var& x_t, std::size_t t,
                  const Condition& cond, std::vector<adapter::IsmRecord>* sink) {
  if (!adapter || !cond.has_instances()) return net.forward(x_t, t, cond.context, nullptr);
  if (cond.instance_texts.size() != cond.boxes.size()) throw DimensionError("one box per instance description");
  std::vector<adapter::InstanceInput> inputs;
  inputs.reserve(cond.boxes.size());
  for (std::size_t i = 0; i < cond.boxes.size(); ++i) inputs.push_back({&cond.instance_texts[i], cond.boxes[i]});
  adapter::InstanceConditioning injector = adapter->condition(inputs);
  injector.record_into(sink);
  return net.forward(x_t, t, cond.context, &injector);
}

namespace {

Var noise_loss(const ToyDenoiser& net, const adapter::IFAdapter* adapter, const NoiseSchedule& schedule,
               const TrainExample& ex, const NoiseDraw& noise) {
  if (ex.x0.shape() != noise.eps.shape()) throw DimensionError("noise shape does not match the example");
  const Var x_t = nn::constant(schedule.q_sample(ex.x0, noise.t, noise.eps));
  return nn::mse(predict_noise(net, adapter, x_t, noise.t, ex.cond), nn::constant(noise.eps));
}

}  // namespace

Var loss_ldm(const ToyDenoiser& net, const NoiseSchedule& schedule, const TrainExample& ex, const NoiseDraw& noise) {
  return noise_loss(net, nullptr, schedule, ex, noise);
}

Var loss_ifa(const ToyDenoiser& net, const adapter::IFAdapter& adapter, const NoiseSchedule& schedule,
             const TrainExample& ex, const NoiseDraw& noise) {
  return noise_loss(net, &adapter, schedule, ex, noise);
}

Tensor guided_noise(const Tensor& eps_uncond, const Tensor& eps_cond, double scale) {
  if (eps_uncond.shape() != eps_cond.shape()) throw DimensionError("guidance: prediction shapes differ");
  Tensor out(eps_cond.shape());
  const double keep = 1.0 - scale;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = keep * eps_uncond[i] + scale * eps_cond[i];
  return out;
}

namespace {

template <typename Predict>
Tensor run_chain(const ToyDenoiser& net, const NoiseSchedule& schedule, const SampleConfig& config,
                 SampleTrace* trace, Predict&& predict) {
  config.validate();
  const nn::NoGradGuard no_grad;
  nn::Rng rng(config.seed);
  const nn::Shape shape{net.cells(), net.config().latent_channels};
  Tensor x = rng.normal_tensor(shape);
  if (trace) trace->latents.push_back(x);
  const auto ts = schedule.respaced(config.steps);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const std::size_t t = ts[i];
    const std::size_t s = i + 1 < ts.size() ? ts[i + 1] : 0;
    const bool last = i + 1 == ts.size();
    const Tensor eps = predict(x, t, last);
    const Tensor z = s > 0 ? rng.normal_tensor(shape) : Tensor(shape, 0.0);
    x = schedule.reverse_step(x, t, s, eps, z, config.clip_x0);
    if (trace) trace->latents.push_back(x);
  }
  return x;
}

}  // namespace

Tensor sample(const ToyDenoiser& net, const adapter::IFAdapter* adapter, const NoiseSchedule& schedule,
              const Condition& cond, const Condition& null_cond, const SampleConfig& config, SampleTrace* trace) {
  return run_chain(net, schedule, config, trace, [&](const Tensor& x, std::size_t t, bool last) {
    const Var xv = nn::constant(x);
    const Tensor eps_u = predict_noise(net, adapter, xv, t, null_cond).value();
    std::vector<adapter::IsmRecord>* sink = (trace && last) ? &trace->final_ism : nullptr;
    const Tensor eps_c = predict_noise(net, adapter, xv, t, cond, sink).value();
    return guided_noise(eps_u, eps_c, config.cfg_scale);
  });
}

Tensor sample_unguided(const ToyDenoiser& net, const adapter::IFAdapter* adapter, const NoiseSchedule& schedule,
                       const Condition& cond, const SampleConfig& config) {
  return run_chain(net, schedule, config, nullptr, [&](const Tensor& x, std::size_t t, bool) {
    return predict_noise(net, adapter, nn::constant(x), t, cond).value();
  });
}

void train(nn::ParamStore& store, const ToyDenoiser& net, const adapter::IFAdapter* adapter,
           const NoiseSchedule& schedule, std::span<const TrainExample> data, const Condition& null_cond,
           const TrainConfig& config, const std::function<void(const StepLog&)>& on_step) {
  config.validate();
  if (data.empty()) throw ValidationError("training needs at least one example");
  if (adapter) {
    for (const auto& name : store.names(ToyDenoiser::kPrefix)) {
      if (!store.frozen(name)) throw UsageError("adapter training requires a frozen base; '" + name + "' is trainable");
    }
  }
  nn::AdamWState opt;
  opt.config.lr = config.lr;
  opt.config.weight_decay = config.weight_decay;
  nn::Rng rng(config.seed);
  const nn::Shape shape{net.cells(), net.config().latent_channels};
  const double inv_b = 1.0 / static_cast<double>(config.batch_size);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    store.zero_grad();
    double total = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1));
      const DropDecision drop = draw_dropout(rng, config.p_drop_global, config.p_drop_local);
      const NoiseDraw noise = draw_noise(rng, schedule, shape);
      TrainExample ex{data[idx].x0, apply_dropout(data[idx].cond, drop, null_cond)};
      const Var loss = adapter ? loss_ifa(net, *adapter, schedule, ex, noise) : loss_ldm(net, schedule, ex, noise);
      const double v = loss.value().item();
      if (!std::isfinite(v)) throw NumericError("non-finite loss at step " + std::to_string(step));
      total += v;
      nn::backward(nn::scale(loss, inv_b));
    }
    nn::adamw_step(store, opt);
    if (on_step) {
      StepLog log{step, total * inv_b, 0.0};
      if (adapter && adapter->site_count() > 0) {
        for (std::size_t s = 0; s < adapter->site_count(); ++s) log.lambda += adapter->gate(s).value().item();
        log.lambda /= static_cast<double>(adapter->site_count());
      }
      on_step(log);
    }
  }
}

}  // namespace ifal::diffusion
