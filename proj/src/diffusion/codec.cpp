// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/diffusion/codec.hpp"

#include <algorithm>
#include <cmath>

#include "ifal/errors.hpp"
#include "ifal/nn/rng.hpp"

namespace ifal::diffusion {

namespace {

// Half of the largest possible texture projection, so the channel stays in [-1, 1].
double texture_scale(std::size_t p) { return 1.0 / (0.5 * static_cast<double>(p)); }

}  // namespace

LatentCodec::LatentCodec(std::size_t image_size, std::size_t grid, std::uint64_t seed)
    : image_size_(image_size), grid_(grid) {
  if (grid == 0 || image_size == 0 || image_size % grid != 0) {
    throw ValidationError("codec image size must be a positive multiple of the latent grid");
  }
  const std::size_t n = patch() * patch();
  nn::Rng rng(seed);
  pattern_.resize(n);
  double mean = 0.0;
  for (auto& v : pattern_) {
    v = rng.normal();
    mean += v;
  }
  mean /= static_cast<double>(n);
  double norm = 0.0;
  for (auto& v : pattern_) {
    v -= mean;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : pattern_) v = norm > 0.0 ? v / norm : 0.0;
}

nn::Tensor LatentCodec::encode(const data::Image& image) const {
  if (image.width() != image_size_ || image.height() != image_size_) {
    throw DimensionError("codec expects a " + std::to_string(image_size_) + "x" + std::to_string(image_size_) +
                         " image");
  }
  const std::size_t p = patch();
  const double n = static_cast<double>(p * p);
  nn::Tensor z({grid_ * grid_, kChannels});
  for (std::size_t gy = 0; gy < grid_; ++gy) {
    for (std::size_t gx = 0; gx < grid_; ++gx) {
      double sum[3] = {0, 0, 0};
      std::vector<double> lum(p * p);
      for (std::size_t dy = 0; dy < p; ++dy) {
        for (std::size_t dx = 0; dx < p; ++dx) {
          const data::Rgb c = image.at(gx * p + dx, gy * p + dy);
          double l = 0.0;
          for (int k = 0; k < 3; ++k) {
            const double v = c[k] / 255.0;
            sum[k] += v;
            l += v / 3.0;
          }
          lum[dy * p + dx] = l;
        }
      }
      const std::size_t cell = gy * grid_ + gx;
      double tex = 0.0;
      for (std::size_t i = 0; i < p * p; ++i) tex += lum[i] * pattern_[i];
      for (int k = 0; k < 3; ++k) z(cell, k) = 2.0 * sum[k] / n - 1.0;
      z(cell, 3) = std::clamp(tex * texture_scale(p), -1.0, 1.0);
    }
  }
  return z;
}

data::Image LatentCodec::decode(const nn::Tensor& latent) const {
  if (latent.rows() != grid_ * grid_ || latent.cols() != kChannels) {
    throw DimensionError("codec expects a [" + std::to_string(grid_ * grid_) + "x4] latent, got " +
                         nn::shape_str(latent.shape()));
  }
  nn::require_finite(latent, "latent to decode");
  const std::size_t p = patch();
  const double inv_p = 1.0 / static_cast<double>(p);
  const auto g = static_cast<std::ptrdiff_t>(grid_);
  data::Image out(image_size_, image_size_);
  // Pixel centre in cell units, offset so integer positions are cell centres.
  auto split = [&](std::size_t px, std::ptrdiff_t& i0, std::ptrdiff_t& i1, double& f) {
    const double pos = (static_cast<double>(px) + 0.5) * inv_p - 0.5;
    const double fl = std::floor(pos);
    i0 = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(fl), 0, g - 1);
    i1 = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(fl) + 1, 0, g - 1);
    f = pos < 0.0 ? 0.0 : std::min(pos - fl, 1.0);
  };
  for (std::size_t py = 0; py < image_size_; ++py) {
    std::ptrdiff_t y0, y1;
    double fy;
    split(py, y0, y1, fy);
    for (std::size_t px = 0; px < image_size_; ++px) {
      std::ptrdiff_t x0, x1;
      double fx;
      split(px, x0, x1, fx);
      const std::size_t own = (py / p) * grid_ + px / p;
      const double tex = latent(own, 3) / texture_scale(p) * pattern_[(py % p) * p + px % p];
      data::Rgb c;
      for (int k = 0; k < 3; ++k) {
        auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
          return latent(static_cast<std::size_t>(y * g + x), static_cast<std::size_t>(k));
        };
        const double top = at(y0, x0) * (1 - fx) + at(y0, x1) * fx;
        const double bot = at(y1, x0) * (1 - fx) + at(y1, x1) * fx;
        const double v = std::clamp((top * (1 - fy) + bot * fy + 1.0) / 2.0 + tex, 0.0, 1.0);
        c[k] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
      out.set(px, py, c);
    }
  }
  return out;
}

}  // namespace ifal::diffusion
