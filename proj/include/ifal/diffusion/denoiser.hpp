// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "ifal/adapter/adapter.hpp"
#include "ifal/nn/layers.hpp"
#include "ifal/nn/param_store.hpp"
#include "ifal/text/text_encoder.hpp"

namespace ifal::diffusion {

struct DenoiserConfig {
  std::size_t grid = 16;  // latent side
  std::size_t latent_channels = 4;
  std::size_t channels = 32;      // at grid x grid
  std::size_t mid_channels = 64;  // at grid/2 x grid/2
  std::size_t time_features = 16;
  std::size_t time_dim = 64;
  std::size_t text_width = 64;
  std::uint64_t seed = 11;

  void validate() const;
};

void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

// Caption keys/values for cross-attention: final-depth word tokens followed by
// the EoT row, so the empty caption still has one key.
nn::Tensor caption_context(const text::EncodedText& caption);

// Sinusoidal features of an integer timestep, [1, features]: sines then cosines.
nn::Tensor timestep_features(std::size_t t, std::size_t features);

// Small convolutional encoder/decoder predicting the noise of a latent. Three
// cross-attention sites: "enc" (full resolution), "mid" (half resolution) and
// "dec" (full resolution). The adapter injects at mid and dec, which are sites 0
// and 1 of adapter_sites().
class ToyDenoiser {
 public:
  static constexpr const char* kPrefix = "base/";

  ToyDenoiser(nn::ParamStore& store, DenoiserConfig config);

  const DenoiserConfig& config() const { return config_; }
  std::vector<adapter::SiteSpec> adapter_sites() const;
  std::size_t cells() const { return config_.grid * config_.grid; }

  // x_t: [grid*grid, latent_channels]; context: caption_context(...).
  nn::Var forward(const nn::Var& x_t, std::size_t t, const nn::Tensor& context,
                  const adapter::AttentionInjector* injector = nullptr) const;

 private:
  struct ResBlock {
    nn::Linear conv1, time, conv2;
  };
  struct CrossAttention {
    nn::Linear q, k, v, o;
  };

  ResBlock make_res(nn::ParamStore& store, const std::string& name, std::size_t ch, nn::Rng& rng) const;
  CrossAttention make_attn(nn::ParamStore& store, const std::string& name, std::size_t ch, nn::Rng& rng) const;
  nn::Var res(const ResBlock& b, const nn::Var& x, const nn::Var& temb, std::size_t side) const;
  nn::Var attend(const CrossAttention& a, const nn::Var& x, const nn::Var& ctx, int adapter_site,
                 const adapter::AttentionInjector* injector) const;

  DenoiserConfig config_;
  nn::Tensor coords_;  // [cells, 2]
  nn::Mlp time_mlp_;
  nn::Linear stem_, down_, up_, out_;
  ResBlock res_enc_, res_mid1_, res_mid2_, res_dec_;
  CrossAttention attn_enc_, attn_mid_, attn_dec_;
};

}  // namespace ifal::diffusion
