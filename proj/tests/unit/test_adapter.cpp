// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "../support/gradcheck.hpp"
#include "ifal/adapter/adapter.hpp"
#include "ifal/errors.hpp"

using namespace ifal;
using namespace ifal::adapter;
using nn::Tensor;
using nn::Var;

namespace {

constexpr std::size_t kD = 8, kDt = 6, kWords = 4, kC = 8;

AdapterConfig tiny_config() {
  AdapterConfig cfg;
  cfg.width = kD;
  cfg.text_width = kDt;
  cfg.tapped_depths = 2;
  cfg.num_queries = 3;
  cfg.resampler_blocks = 2;
  cfg.fourier_bands = 2;
  cfg.sites = {{kC, 4, 4}, {kC, 2, 2}};
  return cfg;
}

// Same deterministic fill as tests/oracles/adapter_oracle.py.
void oracle_fill(nn::ParamStore& store) {
  for (const auto& name : store.names(IFAdapter::kPrefix)) {
    int salt = 0;
    for (unsigned char ch : name) salt += ch;
    salt %= 101;
    Tensor& v = store.mutable_value(name);
    for (std::size_t j = 0; j < v.numel(); ++j) v[j] = 0.3 * std::sin(0.37 * (j + 1.0) + 0.11 * salt);
  }
}

text::EncodedText oracle_text() {
  text::EncodedText t;
  t.depths = {1, 3};
  t.token_count = kWords;
  for (int depth = 0; depth < 2; ++depth) {
    Tensor w({kWords, kDt});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 0.5 * std::cos(0.23 * (i + 1.0) + depth);
    t.tokens.push_back(w);
  }
  t.eot = Tensor({1, kDt});
  for (std::size_t i = 0; i < kDt; ++i) t.eot[i] = 0.5 * std::sin(0.41 * (i + 1.0));
  return t;
}

text::EncodedText random_text(nn::Rng& rng, std::size_t words) {
  text::EncodedText t;
  t.depths = {1, 3};
  t.token_count = words;
  for (int depth = 0; depth < 2; ++depth) t.tokens.push_back(rng.normal_tensor({words, kDt}, 1.0));
  t.eot = rng.normal_tensor({1, kDt}, 1.0);
  return t;
}

void check_row(const Tensor& m, std::size_t row, std::initializer_list<double> expected, double tol = 1e-12) {
  std::size_t c = 0;
  for (double e : expected) CHECK(m(row, c++) == doctest::Approx(e).epsilon(tol));
}

}  // namespace

TEST_CASE("location embedding") {
  nn::ParamStore store;
  IFAdapter a(store, tiny_config());
  const layout::BBox box{0.25, 0.25, 0.5, 0.5};
  CHECK(nn::bitwise_equal(a.location_embedding(box).value(), a.location_embedding(box).value()));

  for (const auto& name : store.names("adapter/location/l1")) {
    Tensor& v = store.mutable_value(name);
    std::fill(v.data().begin(), v.data().end(), 0.0);
  }
  const Tensor zero = a.location_embedding({0, 0, 1, 1}).value();
  for (double v : zero.data()) CHECK(v == 0.0);

  oracle_fill(store);
  check_row(a.location_embedding(box).value(), 0,
            {0.28343375857010245, 0.2647385985779406, 0.21021231121316253, 0.12723477367621555,
             0.027036606407497707, -0.07682083870402018, -0.17028094367979463, -0.2406943217525273});
  CHECK_THROWS_AS(a.location_embedding({0.8, 0, 0.5, 0.1}), ValidationError);
}

TEST_CASE("instance tokens match the scripted resampler oracle") {
  nn::ParamStore store;
  IFAdapter a(store, tiny_config());
  oracle_fill(store);
  const InstanceTokens h = a.instance_tokens(oracle_text(), {0.0, 0.0, 0.5, 0.5});
  const Tensor& m = h.rows.value();
  REQUIRE(m.shape() == nn::Shape{7, kD});
  CHECK(h.has_grounding);
  CHECK(h.appearance_rows == 6);
  check_row(m, 0,
            {-0.1226938010498056, -0.21478071193940992, -0.27779806104988264, -0.3032167458068706,
             -0.287596466472956, -0.2330513545779415, -0.14696383513412953, -0.04098545004343002});
  check_row(m, 1,
            {-0.2644355220134006, -0.23650153185718908, -0.17655816884294448, -0.0927184859476213,
             0.0036702090586307745, 0.09956215848652684, 0.18197883683047122, 0.23976553331072747});
  check_row(m, 6,
            {-0.18670889646011146, -0.1919144581378695, -0.1711452982180863, -0.12721242506337505,
             -0.0660619469568012, 0.004029705759773669, 0.0735759567059675, 0.13316404707242485});
}

TEST_CASE("fixed-length token contract") {
  nn::Rng rng(5);
  for (bool eot : {true, false}) {
    for (bool app : {true, false}) {
      if (!eot && !app) continue;
      AdapterConfig cfg = tiny_config();
      cfg.use_eot = eot;
      cfg.use_appearance_tokens = app;
      nn::ParamStore store;
      IFAdapter a(store, cfg);
      for (std::size_t words : {1, 2, 5, 14}) {
        const InstanceTokens h = a.instance_tokens(random_text(rng, words), {0.1, 0.1, 0.3, 0.3});
        CHECK(h.rows.rows() == cfg.token_rows());
        CHECK(h.rows.cols() == kD);
      }
    }
  }
  // The real encoder, short and long descriptions.
  text::TextEncoderConfig tc;
  tc.width = kDt;
  text::TextEncoder enc(tc);
  nn::ParamStore store;
  IFAdapter a(store, tiny_config());
  const auto s = a.instance_tokens(enc.encode("red circle"), {0, 0, 1, 1});
  const auto l = a.instance_tokens(
      enc.encode("a large bright red circle with thin blue and green stripes near the top left corner"), {0, 0, 1, 1});
  CHECK(s.rows.shape() == l.rows.shape());
  CHECK(s.rows.rows() == 7);
}

TEST_CASE("ablations drop parameters and rows") {
  AdapterConfig cfg = tiny_config();
  nn::ParamStore full_store;
  IFAdapter full(full_store, cfg);
  CHECK(full_store.contains("adapter/queries"));
  CHECK(full_store.contains("adapter/grounding/l0/w"));

  cfg.use_appearance_tokens = false;
  nn::ParamStore no_app;
  IFAdapter a(no_app, cfg);
  CHECK_FALSE(no_app.contains("adapter/queries"));
  CHECK(no_app.names("adapter/resampler").empty());
  CHECK(cfg.token_rows() == 1);

  cfg.use_appearance_tokens = true;
  cfg.use_eot = false;
  nn::ParamStore no_eot;
  IFAdapter b(no_eot, cfg);
  CHECK(no_eot.names("adapter/grounding").empty());
  CHECK(cfg.token_rows() == 6);

  cfg.use_appearance_tokens = false;
  nn::ParamStore none;
  CHECK_THROWS_AS(IFAdapter(none, cfg), ValidationError);
}

TEST_CASE("gate parameters start at exactly zero") {
  nn::ParamStore store;
  IFAdapter a(store, tiny_config());
  for (std::size_t s = 0; s < a.site_count(); ++s) {
    CHECK(a.gate(s).value().item() == 0.0);
    CHECK(a.gate(s).requires_grad());
  }
}

TEST_CASE("bypassed resampler makes boxes differ only by the location term") {
  AdapterConfig cfg = tiny_config();
  cfg.bypass_resampler = true;
  nn::ParamStore store;
  IFAdapter a(store, cfg);
  nn::Rng rng(9);
  const auto text = random_text(rng, 3);
  const layout::BBox b1{0.1, 0.1, 0.3, 0.3}, b2{0.5, 0.2, 0.4, 0.6};
  const Tensor h1 = a.instance_tokens(text, b1).rows.value();
  const Tensor h2 = a.instance_tokens(text, b2).rows.value();
  const Tensor l1 = a.location_embedding(b1).value();
  const Tensor l2 = a.location_embedding(b2).value();
  for (std::size_t r = 1; r < h1.rows(); ++r)
    for (std::size_t c = 0; c < kD; ++c) CHECK((h1(r, c) - h2(r, c)) == doctest::Approx(l1[c] - l2[c]).epsilon(1e-12));
}

TEST_CASE("instance semantic map") {
  nn::ParamStore store;
  IFAdapter a(store, tiny_config());
  nn::Rng rng(3);
  const Var query = nn::constant(rng.normal_tensor({16, kC}, 1.0));
  const Var tokens = a.instance_tokens(random_text(rng, 3), {0, 0, 0.5, 0.5}).rows;

  SUBCASE("single key token under a full region returns its value projection everywhere") {
    const Var one = nn::slice_rows(tokens, 0, 1);
    const Tensor mask({16, 1}, 0.0);
    const Tensor s = a.instance_semantic_map(0, query, one, mask).value();
    const nn::Linear value = nn::Linear::bind(store, "adapter/site0/value");
    const Tensor expected = value(one).value();
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c = 0; c < kC; ++c) CHECK(s(r, c) == doctest::Approx(expected[c]).epsilon(1e-12));
  }
  SUBCASE("rows outside the region are zero") {
    const layout::RegionMask region = layout::rasterize({0, 0, 0.5, 0.5}, 4, 4);
    const Tensor s = a.instance_semantic_map(0, query, tokens, layout::additive_mask(region)).value();
    for (std::size_t r = 0; r < 16; ++r) {
      double mag = 0.0;
      for (std::size_t c = 0; c < kC; ++c) mag += std::abs(s(r, c));
      if (region[r]) {
        CHECK(mag > 0.0);
      } else {
        CHECK(mag == 0.0);
      }
    }
  }
  SUBCASE("shape errors") {
    const Tensor mask({9, 1}, 0.0);
    CHECK_THROWS_AS(a.instance_semantic_map(0, query, tokens, mask), DimensionError);
    CHECK_THROWS_AS(a.instance_semantic_map(1, query, tokens, Tensor({16, 1}, 0.0)), DimensionError);
  }
}

TEST_CASE("two-cell masked attention hand case") {
  // Oracle: cell 0 sees both tokens, cell 1 lies outside the region.
  const Var q = nn::constant(Tensor::matrix({{1, 0}, {0, 1}}));
  const Var k = nn::constant(Tensor::matrix({{1, 1}, {0, -1}}));
  const Var v = nn::constant(Tensor::matrix({{2, 0}, {0, 4}}));
  const double inf = std::numeric_limits<double>::infinity();
  const Tensor mask = Tensor::matrix({{0, 0}, {-inf, -inf}});
  const Tensor out = nn::masked_attention(q, k, v, &mask).value();
  CHECK(out[0] == doctest::Approx(1.3395230986533138).epsilon(1e-14));
  CHECK(out[1] == doctest::Approx(1.3209538026933725).epsilon(1e-14));
  CHECK(out[2] == 0.0);
  CHECK(out[3] == 0.0);
}

TEST_CASE("fusion") {
  nn::ParamStore store;
  IFAdapter a(store, tiny_config());
  nn::Rng rng(11);

  SUBCASE("single instance: weight 1 and D = gate * s") {
    const layout::RegionMask r = layout::rasterize({0, 0, 0.5, 0.5}, 4, 4);
    const Var s = nn::constant(rng.normal_tensor({16, kC}, 1.0));
    std::vector<Var> maps{s};
    std::vector<layout::RegionMask> regions{r};
    const FusionResult f = a.fuse(0, maps, regions);
    REQUIRE(f.gates.size() == 1);
    CHECK(f.gates[0] == doctest::Approx(0.7310585786300049).epsilon(1e-15));
    for (std::size_t c = 0; c < 16; ++c) {
      CHECK(f.weights(c, 0) == (r[c] ? 1.0 : 0.0));
      for (std::size_t j = 0; j < kC; ++j) {
        const double expect = r[c] ? f.gates[0] * s.value()(c, j) : 0.0;
        CHECK(f.ism.value()(c, j) == doctest::Approx(expect).epsilon(1e-14));
      }
    }
  }
  SUBCASE("identical maps split the weight evenly") {
    const Var s = nn::constant(rng.normal_tensor({16, kC}, 1.0));
    std::vector<Var> maps{s, s};
    std::vector<layout::RegionMask> regions{layout::rasterize({0, 0, 1, 1}, 4, 4),
                                            layout::rasterize({0, 0, 0.5, 1}, 4, 4)};
    const FusionResult f = a.fuse(0, maps, regions);
    for (std::size_t c = 0; c < 16; ++c) {
      if (regions[1][c]) {
        CHECK(f.weights(c, 0) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(f.weights(c, 1) == doctest::Approx(0.5).epsilon(1e-15));
      } else {
        CHECK(f.weights(c, 0) == 1.0);
        CHECK(f.weights(c, 1) == 0.0);
      }
    }
  }
  SUBCASE("nested instances: area gates") {
    AdapterConfig cfg = tiny_config();
    cfg.sites = {{kC, 16, 16}};
    nn::ParamStore s16;
    IFAdapter big(s16, cfg);
    std::vector<layout::RegionMask> regions{layout::rasterize({0, 0, 0.5, 0.5}, 16, 16),
                                            layout::rasterize({0.125, 0.125, 0.25, 0.25}, 16, 16)};
    const Var s = nn::constant(rng.normal_tensor({256, kC}, 1.0));
    std::vector<Var> maps{s, s};
    const FusionResult f = big.fuse(0, maps, regions);
    CHECK(f.gates[0] == doctest::Approx(0.7310585786300049).epsilon(1e-15));
    CHECK(f.gates[1] == doctest::Approx(0.9820137900379085).epsilon(1e-15));
    CHECK(f.gates[1] > f.gates[0]);
  }
  SUBCASE("zero-area region and mismatches") {
    std::vector<Var> maps{nn::constant(Tensor({16, kC}, 0.0))};
    std::vector<layout::RegionMask> empty{layout::RegionMask(4, 4)};
    CHECK_THROWS_AS(a.fuse(0, maps, empty), ValidationError);
    std::vector<layout::RegionMask> wrong{layout::rasterize({0, 0, 1, 1}, 2, 2)};
    CHECK_THROWS_AS(a.fuse(0, maps, wrong), DimensionError);
  }
}

TEST_CASE("fusion weights sum to one over covering instances") {
  nn::ParamStore store;
  IFAdapter a(store, tiny_config());
  nn::Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 4));
    std::vector<Var> maps;
    std::vector<layout::RegionMask> regions;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = rng.uniform(0.1, 0.9), h = rng.uniform(0.1, 0.9);
      regions.push_back(layout::rasterize({rng.uniform(0, 1 - w), rng.uniform(0, 1 - h), w, h}, 4, 4));
      maps.push_back(nn::constant(rng.normal_tensor({16, kC}, 2.0)));
    }
    const FusionResult f = a.fuse(0, maps, regions);
    for (std::size_t c = 0; c < 16; ++c) {
      double total = 0.0;
      bool covered = false;
      for (std::size_t i = 0; i < n; ++i) {
        total += f.weights(c, i);
        covered = covered || regions[i][c];
        if (!regions[i][c]) CHECK(f.weights(c, i) == 0.0);
      }
      if (covered) {
        CHECK(std::abs(total - 1.0) < 1e-12);
      } else {
        CHECK(total == 0.0);
        for (std::size_t j = 0; j < kC; ++j) CHECK(f.ism.value()(c, j) == 0.0);
      }
    }
  }
}

TEST_CASE("injection") {
  nn::Rng rng(21);
  const Var base = nn::constant(rng.normal_tensor({16, kC}, 1.0));
  const Var ism = nn::constant(rng.normal_tensor({16, kC}, 1.0));
  SUBCASE("lambda = 0 is exact identity") {
    const Tensor bg({16, 1}, 0.0);
    CHECK(nn::bitwise_equal(IFAdapter::inject(base, ism, bg, nn::constant(Tensor({1, 1}, 0.0))).value(),
                            base.value()));
  }
  SUBCASE("all background is identity for any lambda") {
    const Tensor bg({16, 1}, 1.0);
    CHECK(nn::bitwise_equal(IFAdapter::inject(base, ism, bg, nn::constant(Tensor({1, 1}, 3.0))).value(),
                            base.value()));
  }
  SUBCASE("lambda = 1 on a full-canvas instance") {
    const Tensor bg({16, 1}, 0.0);
    const Tensor out = IFAdapter::inject(base, ism, bg, nn::constant(Tensor({1, 1}, 1.0))).value();
    for (std::size_t i = 0; i < out.numel(); ++i)
      CHECK(out[i] == doctest::Approx(base.value()[i] + 0.7615941559557649 * ism.value()[i]).epsilon(1e-14));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(IFAdapter::inject(base, ism, Tensor({4, 1}, 0.0), nn::constant(Tensor({1, 1}, 0.0))),
                    DimensionError);
  }
}

namespace {

struct Scene {
  std::vector<text::EncodedText> texts;
  std::vector<layout::BBox> boxes;
};

Tensor run_site(const IFAdapter& a, const Scene& scene, const std::vector<std::size_t>& order, const Var& query,
                const Var& base, std::size_t site = 0) {
  std::vector<InstanceInput> inputs;
  for (std::size_t i : order) inputs.push_back({&scene.texts[i], scene.boxes[i]});
  const InstanceConditioning cond = a.condition(inputs);
  return cond.inject(site, query, base).value();
}

}  // namespace

TEST_CASE("zero effect at initialization through the conditioning path") {
  nn::ParamStore store;
  IFAdapter a(store, tiny_config());
  nn::Rng rng(31);
  Scene scene{{random_text(rng, 3), random_text(rng, 6)}, {{0, 0, 0.5, 0.5}, {0.25, 0.25, 0.75, 0.5}}};
  const Var query = nn::constant(rng.normal_tensor({16, kC}, 1.0));
  const Var base = nn::constant(rng.normal_tensor({16, kC}, 1.0));
  CHECK(nn::bitwise_equal(run_site(a, scene, {0, 1}, query, base), base.value()));
  Scene empty;
  CHECK(nn::bitwise_equal(run_site(a, empty, {}, query, base), base.value()));
}

TEST_CASE("feature locality and permutation invariance") {
  nn::ParamStore store;
  IFAdapter a(store, tiny_config());
  store.mutable_value("adapter/site0/gate")[0] = 0.8;
  nn::Rng rng(41);
  Scene scene{{random_text(rng, 3), random_text(rng, 5), random_text(rng, 2)},
              {{0, 0, 0.5, 0.5}, {0.25, 0.25, 0.5, 0.75}, {0.75, 0, 0.25, 0.25}}};
  const Var query = nn::constant(rng.normal_tensor({16, kC}, 1.0));
  const Var base = nn::constant(rng.normal_tensor({16, kC}, 1.0));
  const Tensor ref = run_site(a, scene, {0, 1, 2}, query, base);

  // Permutations: D is a sum over instances, so only summation order can differ.
  for (const auto& order : std::vector<std::vector<std::size_t>>{{2, 1, 0}, {1, 0, 2}, {0, 2, 1}}) {
    CHECK(nn::max_abs_diff(run_site(a, scene, order, query, base), ref) < 1e-14);
  }

  // Perturb instance 1's description; cells covered only by instance 0 or 2 are unchanged.
  Scene other = scene;
  other.texts[1] = random_text(rng, 7);
  const Tensor moved = run_site(a, other, {0, 1, 2}, query, base);
  std::vector<layout::RegionMask> regions;
  for (const auto& b : scene.boxes) regions.push_back(layout::rasterize(b, 4, 4));
  bool any_changed = false;
  for (std::size_t c = 0; c < 16; ++c) {
    bool same = true;
    for (std::size_t j = 0; j < kC; ++j) same = same && moved(c, j) == ref(c, j);
    if (!regions[1][c]) CHECK(same);
    any_changed = any_changed || !same;
  }
  CHECK(any_changed);
}

TEST_CASE("diagnostic sink") {
  nn::ParamStore store;
  IFAdapter a(store, tiny_config());
  nn::Rng rng(51);
  const auto t = random_text(rng, 3);
  std::vector<InstanceInput> inputs{{&t, {0, 0, 0.5, 0.5}}};
  InstanceConditioning cond = a.condition(inputs);
  std::vector<IsmRecord> sink;
  cond.record_into(&sink);
  cond.inject(1, nn::constant(rng.normal_tensor({4, kC}, 1.0)), nn::constant(Tensor({4, kC}, 0.0)));
  REQUIRE(sink.size() == 1);
  CHECK(sink[0].site == 1);
  CHECK(sink[0].instance_maps.size() == 1);
  CHECK(sink[0].ism.shape() == nn::Shape{4, kC});
}

TEST_CASE("adapter gradients match finite differences") {
  nn::ParamStore store;
  IFAdapter a(store, tiny_config());
  for (std::size_t s = 0; s < a.site_count(); ++s) store.mutable_value("adapter/site" + std::to_string(s) + "/gate")[0] = 0.6;
  nn::Rng rng(61);
  Scene scene{{random_text(rng, 3), random_text(rng, 2)}, {{0, 0, 0.5, 0.75}, {0.25, 0.25, 0.75, 0.5}}};
  const Var query = nn::constant(rng.normal_tensor({16, kC}, 1.0));
  const Var base = nn::constant(rng.normal_tensor({16, kC}, 1.0));
  auto loss = [&] {
    std::vector<InstanceInput> inputs;
    for (std::size_t i = 0; i < 2; ++i) inputs.push_back({&scene.texts[i], scene.boxes[i]});
    const InstanceConditioning cond = a.condition(inputs);
    return testing::weighted_sum(cond.inject(0, query, base), 3);
  };
  store.zero_grad();
  nn::backward(loss());
  double worst = 0.0;
  for (const auto& name : store.names("adapter/")) {
    if (name.starts_with("adapter/site1")) continue;  // not on this path
    const Tensor analytic = store.get(name).grad();
    Tensor numeric = testing::numeric_gradient(store.mutable_value(name), [&] { return loss().value().item(); });
    const double err = testing::relative_error(analytic, numeric, 1e-9);
    CAPTURE(name);
    CHECK(err < 1e-4);
    worst = std::max(worst, err);
  }
  MESSAGE("worst relative error " << worst);
}
