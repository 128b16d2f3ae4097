// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/diffusion/pipeline.hpp"

#include "ifal/data/synthetic.hpp"
#include "ifal/errors.hpp"

namespace ifal::text {

void to_json(nlohmann::json& j, const TextEncoderConfig& c) {
  j = {{"vocab_size", c.vocab_size}, {"max_tokens", c.max_tokens}, {"width", c.width},
       {"layers", c.layers}, {"tapped_depths", c.tapped_depths}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TextEncoderConfig& c) {
  c = TextEncoderConfig{};
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.width = j.value("width", c.width);
  c.layers = j.value("layers", c.layers);
  c.tapped_depths = j.value("tapped_depths", c.tapped_depths);
  c.seed = j.value("seed", c.seed);
}

}  // namespace ifal::text

namespace ifal::adapter {

void to_json(nlohmann::json& j, const AdapterConfig& c) {
  j = {{"width", c.width}, {"num_queries", c.num_queries}, {"resampler_blocks", c.resampler_blocks},
       {"fourier_bands", c.fourier_bands}, {"use_appearance_tokens", c.use_appearance_tokens},
       {"use_eot", c.use_eot}, {"activation", nn::to_string(c.activation)}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, AdapterConfig& c) {
  c = AdapterConfig{};
  c.width = j.value("width", c.width);
  c.num_queries = j.value("num_queries", c.num_queries);
  c.resampler_blocks = j.value("resampler_blocks", c.resampler_blocks);
  c.fourier_bands = j.value("fourier_bands", c.fourier_bands);
  c.use_appearance_tokens = j.value("use_appearance_tokens", c.use_appearance_tokens);
  c.use_eot = j.value("use_eot", c.use_eot);
  c.activation = nn::activation_from_string(j.value("activation", nn::to_string(c.activation)));
  c.seed = j.value("seed", c.seed);
}

}  // namespace ifal::adapter

namespace ifal::diffusion {

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"text", c.text}, {"denoiser", c.denoiser}, {"schedule", c.schedule}, {"codec_seed", c.codec_seed},
       {"image_size", c.image_size}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  if (j.contains("text")) c.text = j.at("text").get<text::TextEncoderConfig>();
  if (j.contains("denoiser")) c.denoiser = j.at("denoiser").get<DenoiserConfig>();
  if (j.contains("schedule")) c.schedule = j.at("schedule").get<ScheduleConfig>();
  c.codec_seed = j.value("codec_seed", c.codec_seed);
  c.image_size = j.value("image_size", c.image_size);
}

Pipeline::Pipeline(ModelConfig config)
    : config_(std::move(config)),
      text_(config_.text),
      schedule_(config_.schedule),
      codec_(config_.image_size, config_.denoiser.grid, config_.codec_seed) {
  if (config_.denoiser.text_width != config_.text.width) {
    throw ValidationError("denoiser.text_width must equal text.width");
  }
  if (config_.denoiser.latent_channels != LatentCodec::kChannels) {
    throw ValidationError("denoiser.latent_channels must be " + std::to_string(LatentCodec::kChannels));
  }
  denoiser_ = std::make_unique<ToyDenoiser>(store_, config_.denoiser);
  null_.context = caption_context(text_.encode_null());
}

const adapter::IFAdapter& Pipeline::attach_adapter(adapter::AdapterConfig config) {
  if (adapter_) throw UsageError("an adapter is already attached");
  config.sites = denoiser_->adapter_sites();
  config.text_width = config_.text.width;
  config.tapped_depths = config_.text.tapped_depths.size();
  adapter_ = std::make_unique<adapter::IFAdapter>(store_, std::move(config));
  return *adapter_;
}

Condition Pipeline::encode(const layout::LayoutSpec& spec) const {
  layout::validate(spec);
  Condition c;
  c.context = spec.caption.empty() ? null_.context : caption_context(text_.encode(spec.caption));
  for (const auto& inst : spec.instances) {
    c.instance_texts.push_back(text_.encode(inst.description));
    c.boxes.push_back(inst.bbox);
  }
  return c;
}

std::vector<TrainExample> Pipeline::load_split(const std::filesystem::path& corpus_root,
                                               const std::string& split) const {
  std::vector<TrainExample> out;
  for (const auto& entry : data::read_manifest(corpus_root, split)) {
    TrainExample ex;
    ex.x0 = codec_.encode(data::read_png(corpus_root / entry.image_path));
    ex.cond = encode(layout::load_layout(corpus_root / entry.layout_path));
    out.push_back(std::move(ex));
  }
  return out;
}

nn::Tensor Pipeline::sample(const layout::LayoutSpec& spec, const SampleConfig& config, SampleTrace* trace) const {
  return diffusion::sample(*denoiser_, adapter_.get(), schedule_, encode(spec), null_, config, trace);
}

}  // namespace ifal::diffusion
