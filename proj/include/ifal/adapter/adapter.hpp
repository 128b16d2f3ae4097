// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ifal/layout/layout.hpp"
#include "ifal/nn/layers.hpp"
#include "ifal/nn/param_store.hpp"
#include "ifal/text/text_encoder.hpp"

namespace ifal::adapter {

// Geometry of one cross-attention site of the host network.
struct SiteSpec {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t cells() const { return height * width; }
};

// Hook the host network calls at each cross-attention site. `query` is the site's
// query projection of the latent; `base_attn` is softmax(QK^T/sqrt(d))V against
// the global caption, before the output projection.
class AttentionInjector {
 public:
  virtual ~AttentionInjector() = default;
  virtual nn::Var inject(std::size_t site, const nn::Var& query, const nn::Var& base_attn) const = 0;
};

struct AdapterConfig {
  std::size_t width = 64;            // d
  std::size_t text_width = 64;       // d_text of the encoder
  std::size_t tapped_depths = 2;     // k
  std::size_t num_queries = 4;       // L
  std::size_t resampler_blocks = 2;  // N
  std::size_t fourier_bands = 8;
  bool use_appearance_tokens = true;
  bool use_eot = true;
  // Skips the resampler blocks so h^l = Q_a + location (diagnostics only).
  bool bypass_resampler = false;
  nn::Activation activation = nn::Activation::kGelu;
  std::vector<SiteSpec> sites;  // injection sites, in host order
  std::uint64_t seed = 7;

  // Rows of H per instance: 1 grounding row (if EoT is used) + k*L appearance rows (if used).
  std::size_t token_rows() const {
    return (use_eot ? 1 : 0) + (use_appearance_tokens ? tapped_depths * num_queries : 0);
  }
};

// Per-instance conditioning tokens H. Row 0 is the grounding token when EoT is
// enabled; the appearance tokens for each tapped depth follow in depth order.
struct InstanceTokens {
  nn::Var rows;
  bool has_grounding = true;
  std::size_t appearance_rows = 0;
};

struct FusionResult {
  nn::Var ism;                 // D, [cells, channels]
  nn::Tensor weights;          // softmax weights over covering instances, [cells, n]
  std::vector<double> gates;   // sigmoid(|union| / |a_i|) per instance
};

struct InstanceInput {
  const text::EncodedText* text = nullptr;
  layout::BBox bbox;
};

class InstanceConditioning;

// The instance-feature adapter. All parameters live under "adapter/" in the
// shared ParamStore so they checkpoint separately from the host network.
class IFAdapter {
 public:
  static constexpr const char* kPrefix = "adapter/";

  // Registers freshly initialized parameters in `store`.
  IFAdapter(nn::ParamStore& store, AdapterConfig config);

  const AdapterConfig& config() const { return config_; }
  std::size_t site_count() const { return config_.sites.size(); }

  // MLP(Fourier(x), Fourier(y), Fourier(w), Fourier(h)) -> [1, d].
  nn::Var location_embedding(const layout::BBox& bbox) const;

  InstanceTokens instance_tokens(const text::EncodedText& text, const layout::BBox& bbox) const;

  // s_i: site queries attend over the instance's projected tokens under the
  // region mask ([cells, 1], 0 inside / -inf outside). Zero rows outside the region.
  nn::Var instance_semantic_map(std::size_t site, const nn::Var& query, const nn::Var& tokens,
                                const nn::Tensor& additive_mask) const;

  // Per-cell softmax of f(s_i) over the instances covering the cell, scaled by the
  // area gate and summed. Cells covered by nobody are zero.
  FusionResult fuse(std::size_t site, std::span<const nn::Var> maps,
                    std::span<const layout::RegionMask> regions) const;

  // base + tanh(gate) * (1 - background) (.) ism.
  static nn::Var inject(const nn::Var& base, const nn::Var& ism, const nn::Tensor& background, const nn::Var& gate);

  const nn::Var& gate(std::size_t site) const { return gates_.at(site); }

  // Builds tokens and masks for one sample; the result is the host's injector.
  InstanceConditioning condition(std::span<const InstanceInput> instances) const;

 private:
  struct ResamplerBlock {
    nn::Linear q, k, v, o;
    nn::Mlp mlp;
  };
  struct Site {
    nn::Linear key, value;
    nn::Mlp importance;  // f
  };

  nn::Var resample(std::size_t depth_index, const nn::Tensor& word_tokens) const;

  AdapterConfig config_;
  nn::Var queries_;  // Q_a, [L, d]
  nn::Mlp location_mlp_;
  nn::Mlp grounding_mlp_;
  std::vector<nn::Linear> input_proj_;  // per tapped depth, d_text -> d
  std::vector<ResamplerBlock> blocks_;
  std::vector<Site> sites_;
  std::vector<nn::Var> gates_;  // lambda per site, [1, 1]
};

// Optional sink for per-site diagnostics (the fused map and each s_i).
struct IsmRecord {
  std::size_t site = 0;
  nn::Tensor ism;
  std::vector<nn::Tensor> instance_maps;  // s_i
  nn::Tensor weights;
  std::vector<double> gates;
};

class InstanceConditioning : public AttentionInjector {
 public:
  InstanceConditioning(const IFAdapter& adapter, std::vector<InstanceTokens> tokens,
                       std::vector<layout::BBox> boxes);

  nn::Var inject(std::size_t site, const nn::Var& query, const nn::Var& base_attn) const override;

  std::size_t instance_count() const { return tokens_.size(); }
  const std::vector<InstanceTokens>& tokens() const { return tokens_; }

  void record_into(std::vector<IsmRecord>* sink) { sink_ = sink; }

 private:
  struct SiteMasks {
    std::vector<layout::RegionMask> regions;
    std::vector<nn::Tensor> additive;
    nn::Tensor background;
  };

  const IFAdapter* adapter_;
  std::vector<InstanceTokens> tokens_;
  std::vector<SiteMasks> site_masks_;
  std::vector<IsmRecord>* sink_ = nullptr;
};

}  // namespace ifal::adapter
