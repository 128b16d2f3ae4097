// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/diffusion/denoiser.hpp"

#include <cmath>

#include "ifal/errors.hpp"

namespace ifal::diffusion {

using nn::Var;

void DenoiserConfig::validate() const {
  if (grid < 2 || grid % 2 != 0) throw ValidationError("denoiser.grid must be an even number >= 2");
  if (latent_channels == 0 || channels == 0 || mid_channels == 0 || time_dim == 0 || text_width == 0) {
    throw ValidationError("denoiser widths must be positive");
  }
  if (channels < 4 || mid_channels < 4) throw ValidationError("denoiser channels must be at least 4");
  if (time_features < 2 || time_features % 2 != 0) throw ValidationError("denoiser.time_features must be even");
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = {{"grid", c.grid}, {"latent_channels", c.latent_channels}, {"channels", c.channels},
       {"mid_channels", c.mid_channels}, {"time_features", c.time_features}, {"time_dim", c.time_dim},
       {"text_width", c.text_width}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  c = DenoiserConfig{};
  c.grid = j.value("grid", c.grid);
  c.latent_channels = j.value("latent_channels", c.latent_channels);
  c.channels = j.value("channels", c.channels);
  c.mid_channels = j.value("mid_channels", c.mid_channels);
  c.time_features = j.value("time_features", c.time_features);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.text_width = j.value("text_width", c.text_width);
  c.seed = j.value("seed", c.seed);
}

nn::Tensor caption_context(const text::EncodedText& caption) {
  const nn::Tensor& words = caption.final_tokens();
  const std::size_t w = caption.eot.cols();
  nn::Tensor ctx({words.rows() + 1, w});
  std::copy(words.data().begin(), words.data().end(), ctx.data().begin());
  std::copy(caption.eot.data().begin(), caption.eot.data().end(), ctx.data().begin() + words.numel());
  return ctx;
}

nn::Tensor timestep_features(std::size_t t, std::size_t features) {
  const std::size_t half = features / 2;
  nn::Tensor out({1, features});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(static_cast<double>(t) * freq);
    out[half + i] = std::cos(static_cast<double>(t) * freq);
  }
  return out;
}

ToyDenoiser::ResBlock ToyDenoiser::make_res(nn::ParamStore& store, const std::string& name, std::size_t ch,
                                            nn::Rng& rng) const {
  const std::string p = std::string(kPrefix) + name;
  return {nn::Linear::create(store, p + "/conv1", 9 * ch, ch, rng),
          nn::Linear::create(store, p + "/time", config_.time_dim, ch, rng),
          nn::Linear::create(store, p + "/conv2", 9 * ch, ch, rng)};
}

ToyDenoiser::CrossAttention ToyDenoiser::make_attn(nn::ParamStore& store, const std::string& name, std::size_t ch,
                                                   nn::Rng& rng) const {
  const std::string p = std::string(kPrefix) + name;
  return {nn::Linear::create(store, p + "/q", ch, ch, rng), nn::Linear::create(store, p + "/k", config_.text_width, ch, rng),
          nn::Linear::create(store, p + "/v", config_.text_width, ch, rng), nn::Linear::create(store, p + "/o", ch, ch, rng)};
}

ToyDenoiser::ToyDenoiser(nn::ParamStore& store, DenoiserConfig config) : config_(std::move(config)) {
  config_.validate();
  nn::Rng rng(config_.seed);
  const std::size_t C = config_.channels, C2 = config_.mid_channels, g = config_.grid;
  coords_ = nn::Tensor({g * g, 2});
  for (std::size_t y = 0; y < g; ++y) {
    for (std::size_t x = 0; x < g; ++x) {
      coords_(y * g + x, 0) = (2.0 * x + 1.0) / static_cast<double>(g) - 1.0;
      coords_(y * g + x, 1) = (2.0 * y + 1.0) / static_cast<double>(g) - 1.0;
    }
  }
  const std::string p = kPrefix;
  time_mlp_ = nn::Mlp::create(store, p + "time", {config_.time_features, config_.time_dim, config_.time_dim},
                              nn::Activation::kSilu, rng);
  stem_ = nn::Linear::create(store, p + "stem", 9 * (config_.latent_channels + 2), C, rng);
  res_enc_ = make_res(store, "enc/res", C, rng);
  attn_enc_ = make_attn(store, "enc/attn", C, rng);
  down_ = nn::Linear::create(store, p + "down", C, C2, rng);
  res_mid1_ = make_res(store, "mid/res1", C2, rng);
  attn_mid_ = make_attn(store, "mid/attn", C2, rng);
  res_mid2_ = make_res(store, "mid/res2", C2, rng);
  up_ = nn::Linear::create(store, p + "up", C2, C, rng);
  res_dec_ = make_res(store, "dec/res", C, rng);
  attn_dec_ = make_attn(store, "dec/attn", C, rng);
  out_ = nn::Linear::create(store, p + "out", 9 * C, config_.latent_channels, rng, nn::Init::kZero);
}

std::vector<adapter::SiteSpec> ToyDenoiser::adapter_sites() const {
  const std::size_t g = config_.grid;
  return {{config_.mid_channels, g / 2, g / 2}, {config_.channels, g, g}};
}

Var ToyDenoiser::res(const ResBlock& b, const Var& x, const Var& temb, std::size_t side) const {
  Var h = nn::silu(nn::layer_norm_rows(x));
  h = b.conv1(nn::im2col3x3(h, side, side));
  h = nn::add_row(h, b.time(temb));
  h = nn::silu(nn::layer_norm_rows(h));
  h = b.conv2(nn::im2col3x3(h, side, side));
  return nn::add(x, h);
}

Var ToyDenoiser::attend(const CrossAttention& a, const Var& x, const Var& ctx, int adapter_site,
                        const adapter::AttentionInjector* injector) const {
  const Var q = a.q(nn::layer_norm_rows(x));
  Var attn = nn::masked_attention(q, a.k(ctx), a.v(ctx));
  if (injector && adapter_site >= 0) attn = injector->inject(static_cast<std::size_t>(adapter_site), q, attn);
  return nn::add(x, a.o(attn));
}

Var ToyDenoiser::forward(const Var& x_t, std::size_t t, const nn::Tensor& context,
                         const adapter::AttentionInjector* injector) const {
  const std::size_t g = config_.grid;
  if (x_t.rows() != g * g || x_t.cols() != config_.latent_channels) {
    throw DimensionError("denoiser input " + nn::shape_str(x_t.shape()) + " does not match the latent grid");
  }
  if (context.cols() != config_.text_width || context.rows() == 0) {
    throw DimensionError("caption context " + nn::shape_str(context.shape()) + " does not match the text width");
  }
  const Var temb = nn::silu(time_mlp_.forward(nn::constant(timestep_features(t, config_.time_features))));
  const Var ctx = nn::constant(context);

  const Var coords = nn::constant(coords_);
  const Var in_parts[] = {x_t, coords};
  Var h = stem_(nn::im2col3x3(nn::concat_cols(in_parts), g, g));
  h = res(res_enc_, h, temb, g);
  h = attend(attn_enc_, h, ctx, -1, nullptr);
  const Var skip = h;

  Var m = down_(nn::avg_pool2x2(h, g, g));
  m = res(res_mid1_, m, temb, g / 2);
  m = attend(attn_mid_, m, ctx, 0, injector);
  m = res(res_mid2_, m, temb, g / 2);

  h = nn::add(up_(nn::upsample2x(m, g / 2, g / 2)), skip);
  h = res(res_dec_, h, temb, g);
  h = attend(attn_dec_, h, ctx, 1, injector);
  return out_(nn::im2col3x3(nn::silu(nn::layer_norm_rows(h)), g, g));
}

}  // namespace ifal::diffusion
