// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ifal/nn/tensor.hpp"

namespace ifal::text {

struct TextEncoderConfig {
  std::size_t vocab_size = 4096;
  std::size_t max_tokens = 16;
  std::size_t width = 64;   // d_text
  std::size_t layers = 3;   // mixing layers above the embedding lookup
  // Depths whose word tokens are exposed; 0 is the raw embedding, `layers` the final depth.
  std::vector<std::size_t> tapped_depths = {1, 3};
  std::uint64_t seed = 20240917;
};

struct EncodedText {
  std::vector<std::size_t> depths;    // tapped depths, ascending
  std::vector<nn::Tensor> tokens;     // per tapped depth: [token_count, width]
  nn::Tensor eot;                     // [1, width], terminal position of the final depth
  std::size_t token_count = 0;

  const nn::Tensor& final_tokens() const { return tokens.back(); }
};

// Lowercases, splits on anything that is not a letter or digit, hashes each word
// into `vocab_size` buckets and keeps the first `max_tokens`. Throws
// ValidationError when no word remains.
std::vector<std::uint32_t> tokenize(std::string_view text, std::size_t vocab_size, std::size_t max_tokens);

// Frozen, seeded stand-in for a pretrained text encoder: bucket embeddings plus
// learned-looking positions, followed by causal self-attention / MLP mixing
// layers. A terminal token is appended after the words; its output at the final
// depth is the EoT feature. Pure and thread-safe after construction.
class TextEncoder {
 public:
  explicit TextEncoder(TextEncoderConfig config = {});

  const TextEncoderConfig& config() const { return config_; }
  std::size_t width() const { return config_.width; }
  std::size_t tapped_count() const { return config_.tapped_depths.size(); }

  std::vector<std::uint32_t> tokenize(std::string_view text) const;
  EncodedText encode(std::string_view text) const;
  // Encoding of the empty prompt: no word tokens, only the terminal token.
  EncodedText encode_null() const;

 private:
  struct MixingLayer {
    nn::Tensor wq, wk, wv, wo, w1, w2;
  };
  EncodedText run(const std::vector<std::uint32_t>& ids) const;

  TextEncoderConfig config_;
  nn::Tensor embeddings_;  // [vocab, width]
  nn::Tensor positions_;   // [max_tokens + 1, width]
  nn::Tensor terminal_;    // [1, width]
  std::vector<MixingLayer> layers_;
};

}  // namespace ifal::text
