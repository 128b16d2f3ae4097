// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "ifal/data/image.hpp"
#include "ifal/nn/tensor.hpp"

namespace ifal::diffusion {

// Fixed, seeded stand-in for a trained autoencoder. Each p x p patch maps to
// four latent channels: mean red, green, blue rescaled to [-1, 1], and the
// patch's projection onto a seeded zero-mean texture pattern. Decoding
// interpolates the color channels bilinearly between patch centres, adds the
// texture back and clamps.
class LatentCodec {
 public:
  static constexpr std::size_t kChannels = 4;

  explicit LatentCodec(std::size_t image_size = 64, std::size_t grid = 16, std::uint64_t seed = 99);

  std::size_t image_size() const { return image_size_; }
  std::size_t grid() const { return grid_; }
  std::size_t patch() const { return image_size_ / grid_; }

  nn::Tensor encode(const data::Image& image) const;  // -> [grid*grid, 4], entries in [-1, 1]
  data::Image decode(const nn::Tensor& latent) const;

 private:
  std::size_t image_size_, grid_;
  std::vector<double> pattern_;  // p*p, zero mean, unit norm
};

}  // namespace ifal::diffusion
