// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/text/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ifal/errors.hpp"
#include "ifal/nn/layers.hpp"
#include "ifal/nn/rng.hpp"

namespace ifal::text {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

nn::Var row_norm(const nn::Var& x) { return nn::layer_norm_rows(x); }

}  // namespace

std::vector<std::uint32_t> tokenize(std::string_view text, std::size_t vocab_size, std::size_t max_tokens) {
  if (vocab_size == 0 || max_tokens == 0) throw ValidationError("tokenize: vocabulary and length must be positive");
  std::vector<std::uint32_t> ids;
  std::string word;
  auto flush = [&] {
    if (!word.empty() && ids.size() < max_tokens) ids.push_back(static_cast<std::uint32_t>(fnv1a(word) % vocab_size));
    word.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  if (ids.empty()) throw ValidationError("tokenize: text has no words");
  return ids;
}

TextEncoder::TextEncoder(TextEncoderConfig config) : config_(std::move(config)) {
  if (config_.tapped_depths.empty()) throw ValidationError("text encoder needs at least one tapped depth");
  if (!std::is_sorted(config_.tapped_depths.begin(), config_.tapped_depths.end()) ||
      config_.tapped_depths.back() > config_.layers) {
    throw ValidationError("tapped depths must be ascending and at most the layer count");
  }
  nn::Rng rng(config_.seed);
  const std::size_t d = config_.width;
  embeddings_ = rng.normal_tensor({config_.vocab_size, d});
  positions_ = rng.normal_tensor({config_.max_tokens + 1, d}, 0.5);
  terminal_ = rng.normal_tensor({1, d});
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    MixingLayer layer;
    layer.wq = rng.normal_tensor({d, d}, s);
    layer.wk = rng.normal_tensor({d, d}, s);
    layer.wv = rng.normal_tensor({d, d}, s);
    layer.wo = rng.normal_tensor({d, d}, s);
    layer.w1 = rng.normal_tensor({d, 2 * d}, s);
    layer.w2 = rng.normal_tensor({2 * d, d}, 1.0 / std::sqrt(2.0 * static_cast<double>(d)));
    layers_.push_back(std::move(layer));
  }
}

std::vector<std::uint32_t> TextEncoder::tokenize(std::string_view text) const {
  return text::tokenize(text, config_.vocab_size, config_.max_tokens);
}

EncodedText TextEncoder::encode(std::string_view text) const { return run(tokenize(text)); }

EncodedText TextEncoder::encode_null() const { return run({}); }

EncodedText TextEncoder::run(const std::vector<std::uint32_t>& ids) const {
  using nn::constant;
  const std::size_t d = config_.width;
  const std::size_t n = ids.size() + 1;  // words + terminal
  nn::Tensor x0({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = i < ids.size() ? embeddings_.data().data() + ids[i] * d : terminal_.data().data();
    for (std::size_t j = 0; j < d; ++j) x0(i, j) = src[j] + positions_(i, j);
  }

  // Causal mask: position i sees 0..i, so the terminal token sees the whole text.
  nn::Tensor causal({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) causal(i, j) = -INFINITY;

  EncodedText out;
  out.token_count = ids.size();
  nn::Var x = row_norm(constant(std::move(x0)));
  auto tap = [&](std::size_t depth) {
    if (std::find(config_.tapped_depths.begin(), config_.tapped_depths.end(), depth) == config_.tapped_depths.end())
      return;
    out.depths.push_back(depth);
    out.tokens.push_back(ids.empty() ? nn::Tensor({0, d}) : nn::slice_rows(x, 0, ids.size()).value());
  };
  tap(0);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const MixingLayer& w = layers_[l];
    nn::Var attn = nn::masked_attention(nn::matmul(x, constant(w.wq)), nn::matmul(x, constant(w.wk)),
                                        nn::matmul(x, constant(w.wv)), &causal);
    x = row_norm(nn::add(x, nn::matmul(attn, constant(w.wo))));
    nn::Var hidden = nn::gelu(nn::matmul(x, constant(w.w1)));
    x = row_norm(nn::add(x, nn::matmul(hidden, constant(w.w2))));
    tap(l + 1);
  }
  out.eot = nn::slice_rows(x, n - 1, 1).value();
  return out;
}

}  // namespace ifal::text
