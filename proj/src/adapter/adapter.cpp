// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/adapter/adapter.hpp"

#include <cmath>
#include <limits>

#include "ifal/errors.hpp"
#include "ifal/nn/rng.hpp"

namespace ifal::adapter {

using nn::Var;

namespace {

std::string site_prefix(std::size_t s) { return std::string(IFAdapter::kPrefix) + "site" + std::to_string(s); }

}  // namespace

IFAdapter::IFAdapter(nn::ParamStore& store, AdapterConfig config) : config_(std::move(config)) {
  if (!config_.use_eot && !config_.use_appearance_tokens) {
    throw ValidationError("adapter needs the grounding token, the appearance tokens, or both");
  }
  if (config_.width == 0 || config_.num_queries == 0 || config_.tapped_depths == 0) {
    throw ValidationError("adapter widths and counts must be positive");
  }
  nn::Rng rng(config_.seed);
  const std::string p = kPrefix;
  const std::size_t d = config_.width;
  const auto act = config_.activation;

  location_mlp_ = nn::Mlp::create(store, p + "location", {8 * config_.fourier_bands, d, d}, act, rng);

  if (config_.use_appearance_tokens) {
    queries_ = store.add(p + "queries", rng.normal_tensor({config_.num_queries, d}, 1.0));
    for (std::size_t l = 0; l < config_.tapped_depths; ++l) {
      input_proj_.push_back(
          nn::Linear::create(store, p + "resampler/in" + std::to_string(l), config_.text_width, d, rng));
    }
    for (std::size_t b = 0; b < config_.resampler_blocks; ++b) {
      const std::string bp = p + "resampler/block" + std::to_string(b);
      ResamplerBlock blk{nn::Linear::create(store, bp + "/q", d, d, rng),
                         nn::Linear::create(store, bp + "/k", d, d, rng),
                         nn::Linear::create(store, bp + "/v", d, d, rng),
                         nn::Linear::create(store, bp + "/o", d, d, rng),
                         nn::Mlp::create(store, bp + "/mlp", {d, 2 * d, d}, act, rng)};
      blocks_.push_back(std::move(blk));
    }
  }
  if (config_.use_eot) {
    grounding_mlp_ = nn::Mlp::create(store, p + "grounding", {config_.text_width + d, d, d}, act, rng);
  }
  for (std::size_t s = 0; s < config_.sites.size(); ++s) {
    const SiteSpec& spec = config_.sites[s];
    if (spec.channels < 4 || spec.cells() == 0) throw ValidationError("adapter site geometry is too small");
    const std::string sp = site_prefix(s);
    Site site{nn::Linear::create(store, sp + "/key", d, spec.channels, rng),
              nn::Linear::create(store, sp + "/value", d, spec.channels, rng),
              nn::Mlp::create(store, sp + "/importance", {spec.channels, spec.channels / 4, 1}, act, rng)};
    sites_.push_back(std::move(site));
    gates_.push_back(store.add(sp + "/gate", nn::Tensor({1, 1}, 0.0)));
  }
}

Var IFAdapter::location_embedding(const layout::BBox& bbox) const {
  layout::validate(bbox);
  const std::size_t b = config_.fourier_bands;
  nn::Tensor feats({1, 8 * b});
  const double coords[4] = {bbox.x, bbox.y, bbox.w, bbox.h};
  for (std::size_t c = 0; c < 4; ++c) {
    const nn::Tensor e = nn::fourier_embed(coords[c], b);
    for (std::size_t j = 0; j < 2 * b; ++j) feats[c * 2 * b + j] = e[j];
  }
  return location_mlp_.forward(nn::constant(std::move(feats)));
}

Var IFAdapter::resample(std::size_t depth_index, const nn::Tensor& word_tokens) const {
  if (config_.bypass_resampler) return queries_;
  Var context = nn::layer_norm_rows(input_proj_[depth_index](nn::constant(word_tokens)));
  Var state = queries_;
  for (const auto& blk : blocks_) {
    Var normed = nn::layer_norm_rows(state);
    Var attn = nn::masked_attention(blk.q(normed), blk.k(context), blk.v(context));
    state = nn::add(state, blk.o(attn));
    state = nn::add(state, blk.mlp.forward(nn::layer_norm_rows(state)));
  }
  return state;
}

InstanceTokens IFAdapter::instance_tokens(const text::EncodedText& text, const layout::BBox& bbox) const {
  if (text.tokens.size() != config_.tapped_depths) {
    throw DimensionError("adapter expects " + std::to_string(config_.tapped_depths) + " tapped depths, text has " +
                         std::to_string(text.tokens.size()));
  }
  if (text.eot.cols() != config_.text_width) throw DimensionError("text width does not match the adapter");
  Var loc = location_embedding(bbox);
  std::vector<Var> rows;
  InstanceTokens out;
  out.has_grounding = config_.use_eot;
  if (config_.use_eot) {
    Var parts[] = {nn::constant(text.eot), loc};
    rows.push_back(grounding_mlp_.forward(nn::concat_cols(parts)));
  }
  if (config_.use_appearance_tokens) {
    for (std::size_t l = 0; l < config_.tapped_depths; ++l) {
      rows.push_back(nn::add_row(resample(l, text.tokens[l]), loc));
      out.appearance_rows += config_.num_queries;
    }
  }
  out.rows = nn::concat_rows(rows);
  return out;
}

Var IFAdapter::instance_semantic_map(std::size_t site, const Var& query, const Var& tokens,
                                     const nn::Tensor& additive_mask) const {
  const Site& s = sites_.at(site);
  const SiteSpec& spec = config_.sites[site];
  if (query.cols() != spec.channels || query.rows() != spec.cells()) {
    throw DimensionError("site query " + nn::shape_str(query.shape()) + " does not match the site geometry");
  }
  if (additive_mask.rows() != query.rows()) throw DimensionError("region mask does not match the site grid");
  return nn::masked_attention(query, s.key(tokens), s.value(tokens), &additive_mask);
}

FusionResult IFAdapter::fuse(std::size_t site, std::span<const Var> maps,
                             std::span<const layout::RegionMask> regions) const {
  if (maps.size() != regions.size()) throw DimensionError("fuse: one region per instance map");
  if (maps.empty()) throw DimensionError("fuse: no instances");
  const std::size_t n = maps.size();
  const std::size_t cells = maps[0].rows();
  for (std::size_t i = 0; i < n; ++i) {
    if (maps[i].rows() != cells || maps[i].cols() != maps[0].cols()) throw DimensionError("fuse: map shapes differ");
    if (regions[i].size() != cells) throw DimensionError("fuse: region grid does not match the maps");
  }
  const std::size_t total = layout::union_area(regions);
  FusionResult out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t area = layout::instance_area(regions[i]);
    if (area == 0) throw ValidationError("fuse: instance " + std::to_string(i) + " has zero area");
    out.gates.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(total) / static_cast<double>(area))));
  }

  const Site& s = sites_.at(site);
  std::vector<Var> logits;
  logits.reserve(n);
  for (const auto& m : maps) logits.push_back(s.importance.forward(m));
  nn::Tensor cover({cells, n}, 0.0);
  std::vector<bool> live(cells, false);
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      if (regions[i][c]) {
        live[c] = true;
      } else {
        cover(c, i) = nn::kMaskedLogit;
      }
    }
  }
  Var weights = nn::softmax_rows(nn::add(nn::concat_cols(logits), nn::constant(std::move(cover))), &live);
  out.weights = weights.value();

  Var ism;
  for (std::size_t i = 0; i < n; ++i) {
    Var term = nn::mul_col(maps[i], nn::scale(nn::slice_cols(weights, i, 1), out.gates[i]));
    ism = ism.defined() ? nn::add(ism, term) : term;
  }
  out.ism = ism;
  return out;
}

Var IFAdapter::inject(const Var& base, const Var& ism, const nn::Tensor& background, const Var& gate) {
  if (background.numel() != base.rows()) throw DimensionError("inject: background mask does not match the grid");
  nn::Tensor foreground({background.numel(), 1});
  for (std::size_t i = 0; i < background.numel(); ++i) foreground[i] = 1.0 - background[i];
  return nn::add(base, nn::mul_scalar(nn::mul_col(ism, nn::constant(std::move(foreground))), nn::tanh(gate)));
}

InstanceConditioning IFAdapter::condition(std::span<const InstanceInput> instances) const {
  std::vector<InstanceTokens> tokens;
  std::vector<layout::BBox> boxes;
  for (const auto& inst : instances) {
    if (!inst.text) throw UsageError("instance without encoded text");
    tokens.push_back(instance_tokens(*inst.text, inst.bbox));
    boxes.push_back(inst.bbox);
  }
  return InstanceConditioning(*this, std::move(tokens), std::move(boxes));
}

InstanceConditioning::InstanceConditioning(const IFAdapter& adapter, std::vector<InstanceTokens> tokens,
                                           std::vector<layout::BBox> boxes)
    : adapter_(&adapter), tokens_(std::move(tokens)) {
  for (const auto& spec : adapter.config().sites) {
    SiteMasks sm;
    for (const auto& b : boxes) {
      sm.regions.push_back(layout::rasterize(b, spec.height, spec.width));
      sm.additive.push_back(layout::additive_mask(sm.regions.back()));
    }
    sm.background = layout::background_mask(sm.regions, spec.height, spec.width);
    site_masks_.push_back(std::move(sm));
  }
}

Var InstanceConditioning::inject(std::size_t site, const Var& query, const Var& base_attn) const {
  // No instances: the background mask is all ones and the residual vanishes.
  if (tokens_.empty()) return base_attn;
  const SiteMasks& sm = site_masks_.at(site);
  std::vector<Var> maps;
  maps.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    maps.push_back(adapter_->instance_semantic_map(site, query, tokens_[i].rows, sm.additive[i]));
  }
  FusionResult fused = adapter_->fuse(site, maps, sm.regions);
  if (sink_) {
    IsmRecord rec{site, fused.ism.value(), {}, fused.weights, fused.gates};
    for (const auto& m : maps) rec.instance_maps.push_back(m.value());
    sink_->push_back(std::move(rec));
  }
  return IFAdapter::inject(base_attn, fused.ism, sm.background, adapter_->gate(site));
}

}  // namespace ifal::adapter
