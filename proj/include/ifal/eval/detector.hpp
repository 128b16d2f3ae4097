// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "ifal/data/image.hpp"
#include "ifal/eval/metrics.hpp"

namespace ifal::eval {

struct DetectorConfig {
  std::size_t min_area = 24;         // pixels; smaller components are noise
  std::size_t max_band_height = 8;   // components at most this tall may be stripe bands
  std::size_t band_x_tolerance = 2;  // pixels of left/right edge disagreement within a stack
  std::size_t band_gap = 1;          // pixels allowed between stacked bands
  std::size_t min_bands = 3;
};

// Palette-region detector: 4-connected components per palette color with
// tight boxes, score = fraction of the box carrying the component's color(s).
// Vertically stacked thin bands alternating between two colors merge into one
// striped detection.
std::vector<Detection> detect(const data::Image& image, const DetectorConfig& config = {});

// Fixed seeded feature map for Frechet statistics: block-average the image to
// a coarse grid, then project linearly.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(std::size_t dim = 32, std::size_t grid = 8, std::uint64_t seed = 4242);

  std::size_t dim() const { return static_cast<std::size_t>(projection_.cols()); }
  Eigen::VectorXd operator()(const data::Image& image) const;
  Eigen::MatrixXd batch(const std::vector<data::Image>& images) const;

 private:
  std::size_t grid_;
  Eigen::MatrixXd projection_;  // [grid*grid*3, dim]
};

}  // namespace ifal::eval
