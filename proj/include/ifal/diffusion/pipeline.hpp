// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifal/adapter/adapter.hpp"
#include "ifal/diffusion/codec.hpp"
#include "ifal/diffusion/diffusion.hpp"
#include "ifal/layout/layout.hpp"
#include "ifal/nn/param_store.hpp"
#include "ifal/text/text_encoder.hpp"

namespace ifal::text {
void to_json(nlohmann::json& j, const TextEncoderConfig& c);
void from_json(const nlohmann::json& j, TextEncoderConfig& c);
}  // namespace ifal::text

namespace ifal::adapter {
// Sites are omitted: they always come from the host denoiser.
void to_json(nlohmann::json& j, const AdapterConfig& c);
void from_json(const nlohmann::json& j, AdapterConfig& c);
}  // namespace ifal::adapter

namespace ifal::diffusion {

struct ModelConfig {
  text::TextEncoderConfig text;
  DenoiserConfig denoiser;
  ScheduleConfig schedule;
  std::uint64_t codec_seed = 99;
  std::size_t image_size = 64;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Owns the frozen text encoder, the parameter store, the base denoiser and
// optionally the adapter, and turns layouts into encoded conditions.
class Pipeline {
 public:
  explicit Pipeline(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }
  const ToyDenoiser& denoiser() const { return *denoiser_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const LatentCodec& codec() const { return codec_; }
  const text::TextEncoder& text_encoder() const { return text_; }

  // Sites are taken from the denoiser. Throws UsageError if already attached.
  const adapter::IFAdapter& attach_adapter(adapter::AdapterConfig config);
  const adapter::IFAdapter* adapter() const { return adapter_.get(); }

  Condition encode(const layout::LayoutSpec& spec) const;
  const Condition& null_condition() const { return null_; }

  // Loads every sample of a corpus split as a training example.
  std::vector<TrainExample> load_split(const std::filesystem::path& corpus_root, const std::string& split) const;

  nn::Tensor sample(const layout::LayoutSpec& spec, const SampleConfig& config, SampleTrace* trace = nullptr) const;

 private:
  ModelConfig config_;
  text::TextEncoder text_;
  nn::ParamStore store_;
  std::unique_ptr<ToyDenoiser> denoiser_;
  NoiseSchedule schedule_;
  LatentCodec codec_;
  std::unique_ptr<adapter::IFAdapter> adapter_;
  Condition null_;
};

}  // namespace ifal::diffusion
