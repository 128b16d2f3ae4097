// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>

#include "ifal/data/synthetic.hpp"
#include "ifal/diffusion/pipeline.hpp"
#include "ifal/errors.hpp"
#include "ifal/nn/checkpoint.hpp"
#include "ifal/nn/ops.hpp"

using namespace ifal;
using namespace ifal::diffusion;
using nn::Tensor;
using nn::bitwise_equal;

namespace {

ModelConfig tiny_model() {
  ModelConfig mc;
  mc.denoiser.channels = 8;
  mc.denoiser.mid_channels = 16;
  mc.denoiser.time_dim = 16;
  return mc;
}

layout::LayoutSpec scene_layout(std::uint64_t seed) {
  return data::to_layout(data::gen_scene(seed, data::SceneConfig{}));
}

// The output projection starts at zero, which would block all gradients
// upstream of it; stands in for a pretrained base.
void open_output(Pipeline& p) {
  nn::Rng rng(77);
  p.store().assign("base/out/w", rng.normal_tensor(p.store().get("base/out/w").value().shape(), 0.1));
}

Tensor vec(std::initializer_list<double> v) {
  Tensor t({v.size(), 1});
  std::size_t i = 0;
  for (double x : v) t[i++] = x;
  return t;
}

}  // namespace

TEST_CASE("schedule against a cumulative-product oracle") {
  const NoiseSchedule s;
  CHECK(s.steps() == 200);
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(100) == doctest::Approx(0.07665890493502028).epsilon(1e-12));
  CHECK(s.alpha_bar(200) == doctest::Approx(3.031837167231906e-05).epsilon(1e-10));
  CHECK(s.beta(1) == doctest::Approx(5e-4));
  CHECK(s.beta(200) == doctest::Approx(0.1));

  ScheduleConfig literal;
  literal.rescale_to_steps = false;
  CHECK(NoiseSchedule(literal).alpha_bar(100) == doctest::Approx(0.6024803053077055).epsilon(1e-12));

  for (std::size_t t = 1; t <= s.steps(); ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));

  ScheduleConfig bad;
  bad.beta_end = 0.5;  // 2.5 after rescaling
  CHECK_THROWS_AS(NoiseSchedule{bad}, ValidationError);
}

TEST_CASE("forward noising") {
  const NoiseSchedule s;
  const Tensor x0 = vec({0.5, -0.25, 0.75, 0.0});
  const Tensor eps = vec({1.0, -0.5, 0.2, 2.0});
  const Tensor x = s.q_sample(x0, 100, eps);
  const double expected[] = {1.099343115308242, -0.549671557654121, 0.3998363627680916, 1.9218127849142639};
  for (std::size_t i = 0; i < 4; ++i) CHECK(x[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  CHECK_THROWS_AS(s.q_sample(x0, 0, eps), ValidationError);
  CHECK_THROWS_AS(s.q_sample(x0, 201, eps), ValidationError);
  CHECK_THROWS_AS(s.q_sample(x0, 5, vec({1.0})), DimensionError);
}

TEST_CASE("respacing") {
  const NoiseSchedule s;
  for (std::size_t count : {1u, 7u, 50u, 200u, 500u}) {
    const auto ts = s.respaced(count);
    CHECK(ts.front() == 200);
    CHECK(ts.back() >= 1);
    CHECK(ts.size() == std::min<std::size_t>(count, 200));
    for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
  }
}

TEST_CASE("ancestral step oracle") {
  const NoiseSchedule s;
  const Tensor x_t = vec({0.3, -1.2, 2.5, 0.1});
  const Tensor eps = vec({0.4, -0.9, 0.1, 1.5});
  const Tensor z = vec({0.2, 0.0, -1.0, 0.5});
  const Tensor out = s.reverse_step(x_t, 120, 80, eps, z, 1.0);
  const double expected[] = {0.019697138201687836, -0.7473976875362033, 0.2809985716705563, 0.060512592644920926};
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(expected[i]).epsilon(1e-12));

  SUBCASE("final step returns the clipped clean estimate") {
    const Tensor last = s.reverse_step(x_t, 4, 0, eps, z, 1.0);
    for (std::size_t i = 0; i < 4; ++i) {
      const double x0 = (x_t[i] - std::sqrt(1.0 - s.alpha_bar(4)) * eps[i]) / std::sqrt(s.alpha_bar(4));
      CHECK(last[i] == doctest::Approx(std::clamp(x0, -1.0, 1.0)).epsilon(1e-12));
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(s.reverse_step(x_t, 80, 80, eps, z, 1.0), ValidationError);
    Tensor nan_eps = eps;
    nan_eps[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(s.reverse_step(x_t, 120, 80, nan_eps, z, 0.0), NumericError);
  }
}

TEST_CASE("zero predictor has unit loss in expectation") {
  nn::Rng rng(17);
  const NoiseSchedule s;
  const nn::Var zero = nn::constant(Tensor({16, 4}, 0.0));
  double total = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    total += nn::mse(zero, nn::constant(draw_noise(rng, s, {16, 4}).eps)).value().item();
  }
  CHECK(std::abs(total / draws - 1.0) < 0.05);
}

TEST_CASE("condition dropout rates") {
  nn::Rng rng(5);
  const int n = 100000;
  int global = 0, local = 0, both = 0;
  for (int i = 0; i < n; ++i) {
    const DropDecision d = draw_dropout(rng, 0.30, 0.15);
    global += d.global;
    local += d.local;
    both += d.global && d.local;
  }
  CHECK(std::abs(global / double(n) - 0.30) < 0.01);
  CHECK(std::abs(local / double(n) - 0.15) < 0.01);
  CHECK(std::abs(both / double(n) - 0.045) < 0.01);

  for (int i = 0; i < 1000; ++i) {
    const DropDecision never = draw_dropout(rng, 0.0, 0.0);
    const DropDecision always = draw_dropout(rng, 1.0, 1.0);
    CHECK_FALSE(never.global);
    CHECK_FALSE(never.local);
    CHECK(always.global);
    CHECK(always.local);
  }

  const Pipeline p(tiny_model());
  const Condition c = p.encode(scene_layout(3));
  const Condition g = apply_dropout(c, {true, false}, p.null_condition());
  CHECK(bitwise_equal(g.context, p.null_condition().context));
  CHECK(g.boxes.size() == c.boxes.size());
  const Condition l = apply_dropout(c, {false, true}, p.null_condition());
  CHECK(bitwise_equal(l.context, c.context));
  CHECK_FALSE(l.has_instances());
}

TEST_CASE("guidance combination is exact at 0 and 1") {
  nn::Rng rng(1);
  const Tensor u = rng.normal_tensor({8, 4}), c = rng.normal_tensor({8, 4});
  CHECK(bitwise_equal(guided_noise(u, c, 0.0), u));
  CHECK(bitwise_equal(guided_noise(u, c, 1.0), c));
  const Tensor g = guided_noise(u, c, 7.5);
  for (std::size_t i = 0; i < g.numel(); ++i) CHECK(g[i] == doctest::Approx(u[i] + 7.5 * (c[i] - u[i])));
}

TEST_CASE("sampling") {
  Pipeline p(tiny_model());
  p.attach_adapter({});
  const auto spec = scene_layout(9);
  const Condition cond = p.encode(spec);
  SampleConfig sc;
  sc.steps = 6;
  sc.seed = 21;

  SUBCASE("guidance scale 0 and 1 follow the unguided chains") {
    sc.cfg_scale = 0.0;
    const Tensor s0 = sample(p.denoiser(), p.adapter(), p.schedule(), cond, p.null_condition(), sc);
    CHECK(bitwise_equal(s0, sample_unguided(p.denoiser(), p.adapter(), p.schedule(), p.null_condition(), sc)));
    sc.cfg_scale = 1.0;
    const Tensor s1 = sample(p.denoiser(), p.adapter(), p.schedule(), cond, p.null_condition(), sc);
    CHECK(bitwise_equal(s1, sample_unguided(p.denoiser(), p.adapter(), p.schedule(), cond, sc)));
  }
  SUBCASE("closed gate leaves the base sampler untouched") {
    layout::LayoutSpec empty = spec;
    empty.instances.clear();
    CHECK(bitwise_equal(p.sample(spec, sc), p.sample(empty, sc)));
  }
  SUBCASE("seeded determinism") {
    SampleTrace a, b;
    CHECK(bitwise_equal(p.sample(spec, sc, &a), p.sample(spec, sc, &b)));
    CHECK(a.latents.size() == 7);
    CHECK(a.final_ism.size() == b.final_ism.size());
    CHECK_FALSE(a.final_ism.empty());
    sc.seed = 22;
    CHECK_FALSE(bitwise_equal(p.sample(spec, sc), p.sample(spec, {6, 7.5, 21, 1.0})));
  }
  SUBCASE("no tape is recorded while sampling") {
    CHECK(nn::grad_enabled());
    p.sample(spec, sc);
    CHECK(nn::grad_enabled());
  }
}

TEST_CASE("adapter objective at initialization") {
  Pipeline p(tiny_model());
  open_output(p);
  const auto& ad = p.attach_adapter({});
  nn::Rng rng(4);
  const TrainExample ex{p.codec().encode(data::render(data::gen_scene(4, data::SceneConfig{}))), p.encode(scene_layout(4))};
  const NoiseDraw noise = draw_noise(rng, p.schedule(), ex.x0.shape());

  const nn::Var lifa = loss_ifa(p.denoiser(), ad, p.schedule(), ex, noise);
  const nn::Var lldm = loss_ldm(p.denoiser(), p.schedule(), ex, noise);
  CHECK(bitwise_equal(lifa.value(), lldm.value()));

  // The gate still receives signal while closed.
  p.store().zero_grad();
  nn::backward(lifa);
  double gate_grad = 0.0;
  for (std::size_t s = 0; s < ad.site_count(); ++s) gate_grad += std::abs(ad.gate(s).grad().item());
  CHECK(gate_grad > 0.0);
}

TEST_CASE("adapter training keeps the base frozen") {
  Pipeline p(tiny_model());
  std::vector<TrainExample> data;
  for (std::uint64_t i = 0; i < 4; ++i) {
    data.push_back({p.codec().encode(data::render(data::gen_scene(i, data::SceneConfig{}))), p.encode(scene_layout(i))});
  }
  TrainConfig tc;
  tc.steps = 2;
  tc.batch_size = 2;
  tc.lr = 1e-3;

  SUBCASE("base training moves the base") {
    const Tensor before = p.store().get("base/out/w").value();
    std::vector<StepLog> logs;
    train(p.store(), p.denoiser(), nullptr, p.schedule(), data, p.null_condition(), tc,
          [&](const StepLog& l) { logs.push_back(l); });
    CHECK(logs.size() == 2);
    CHECK(std::isfinite(logs[0].loss));
    CHECK_FALSE(bitwise_equal(before, p.store().get("base/out/w").value()));
  }
  SUBCASE("adapter steps change only adapter parameters") {
    open_output(p);
    const auto& ad = p.attach_adapter({});
    CHECK_THROWS_AS(train(p.store(), p.denoiser(), &ad, p.schedule(), data, p.null_condition(), tc), UsageError);
    p.store().set_frozen_prefix("base/", true);
    std::map<std::string, Tensor> before;
    for (const auto& n : p.store().names()) before[n] = p.store().get(n).value();
    train(p.store(), p.denoiser(), &ad, p.schedule(), data, p.null_condition(), tc);
    for (const auto& n : p.store().names("base/")) CHECK(bitwise_equal(before[n], p.store().get(n).value()));
    CHECK_FALSE(bitwise_equal(before["adapter/site0/gate"], ad.gate(0).value()));
  }
  SUBCASE("zero steps is a no-op") {
    tc.steps = 0;
    const std::string before = nn::encode_checkpoint(p.store());
    train(p.store(), p.denoiser(), nullptr, p.schedule(), data, p.null_condition(), tc);
    CHECK(nn::encode_checkpoint(p.store()) == before);
  }
  SUBCASE("validation") {
    tc.p_drop_local = 1.5;
    CHECK_THROWS_AS(train(p.store(), p.denoiser(), nullptr, p.schedule(), data, p.null_condition(), tc),
                    ValidationError);
    tc.p_drop_local = 0.1;
    CHECK_THROWS_AS(train(p.store(), p.denoiser(), nullptr, p.schedule(), {}, p.null_condition(), tc),
                    ValidationError);
  }
}

TEST_CASE("latent codec") {
  const LatentCodec codec;
  const data::Image flat(64, 64, {255, 0, 255});
  const Tensor z = codec.encode(flat);
  CHECK(z.shape() == nn::Shape{256, 4});
  CHECK(codec.decode(z) == flat);
  for (double v : z.data()) CHECK(std::abs(v) <= 1.0);

  // Shape and color survive a round trip well enough for the verifier.
  std::size_t ok = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto scene = data::gen_scene(seed, data::SceneConfig{});
    const data::Image back = codec.decode(codec.encode(data::render(scene)));
    for (const auto& in : data::to_layout(scene).instances) {
      ok += data::verify(back, in.bbox, in.description);
      ++total;
    }
  }
  CHECK(static_cast<double>(ok) / static_cast<double>(total) > 0.95);
  CHECK_THROWS_AS(codec.encode(data::Image(32, 32)), DimensionError);
  CHECK_THROWS_AS(codec.decode(Tensor({10, 4})), DimensionError);
}

TEST_CASE("config json") {
  ModelConfig mc = tiny_model();
  mc.schedule.steps = 100;
  const ModelConfig back = nlohmann::json(mc).get<ModelConfig>();
  CHECK(back.denoiser.channels == 8);
  CHECK(back.schedule.steps == 100);
  CHECK(nlohmann::json(back) == nlohmann::json(mc));

  TrainConfig tc;
  tc.lr = 3e-3;
  CHECK(nlohmann::json(tc).get<TrainConfig>().lr == 3e-3);
  SampleConfig sc;
  sc.cfg_scale = 2.0;
  CHECK(nlohmann::json(sc).get<SampleConfig>().cfg_scale == 2.0);

  ModelConfig mismatch;
  mismatch.denoiser.text_width = 32;
  CHECK_THROWS_AS(Pipeline{mismatch}, ValidationError);
}
