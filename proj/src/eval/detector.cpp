// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/eval/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "ifal/data/synthetic.hpp"
#include "ifal/errors.hpp"
#include "ifal/nn/rng.hpp"

namespace ifal::eval {

namespace {

struct Component {
  data::Color color;
  std::size_t x0, y0, x1, y1;  // half-open pixel box
  std::size_t pixels = 0;
  std::size_t height() const { return y1 - y0; }
};

std::size_t absdiff(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

layout::BBox to_box(std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1, const data::Image& img) {
  const double W = static_cast<double>(img.width()), H = static_cast<double>(img.height());
  return {x0 / W, y0 / H, (x1 - x0) / W, (y1 - y0) / H};
}

}  // namespace

std::vector<Detection> detect(const data::Image& image, const DetectorConfig& config) {
  const std::size_t W = image.width(), H = image.height();
  std::vector<int> cls(W * H, -1);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      if (auto c = data::classify_pixel(image.at(x, y))) cls[y * W + x] = static_cast<int>(*c);

  std::vector<Component> comps;
  std::vector<bool> seen(W * H, false);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < W * H; ++start) {
    if (seen[start] || cls[start] < 0) continue;
    Component c{static_cast<data::Color>(cls[start]), W, H, 0, 0, 0};
    stack.assign(1, start);
    seen[start] = true;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const std::size_t x = i % W, y = i / W;
      c.x0 = std::min(c.x0, x);
      c.y0 = std::min(c.y0, y);
      c.x1 = std::max(c.x1, x + 1);
      c.y1 = std::max(c.y1, y + 1);
      ++c.pixels;
      auto push = [&](std::size_t j) {
        if (!seen[j] && cls[j] == cls[start]) {
          seen[j] = true;
          stack.push_back(j);
        }
      };
      if (x > 0) push(i - 1);
      if (x + 1 < W) push(i + 1);
      if (y > 0) push(i - W);
      if (y + 1 < H) push(i + W);
    }
    comps.push_back(c);
  }

  auto count_in = [&](std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1, int a, int b) {
    std::size_t n = 0;
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) n += cls[y * W + x] == a || cls[y * W + x] == b;
    return n;
  };

  // Stripe stacks, built top-down from thin components.
  std::vector<std::size_t> bands;
  for (std::size_t i = 0; i < comps.size(); ++i)
    if (comps[i].height() <= config.max_band_height && comps[i].pixels >= 4) bands.push_back(i);
  std::stable_sort(bands.begin(), bands.end(), [&](std::size_t a, std::size_t b) { return comps[a].y0 < comps[b].y0; });
  std::vector<bool> used(comps.size(), false);
  std::vector<Detection> out;
  for (std::size_t bi = 0; bi < bands.size(); ++bi) {
    if (used[bands[bi]]) continue;
    std::vector<std::size_t> chain{bands[bi]};
    while (true) {
      const Component& last = comps[chain.back()];
      std::optional<std::size_t> next;
      for (std::size_t bj = 0; bj < bands.size() && !next; ++bj) {
        const std::size_t k = bands[bj];
        const Component& c = comps[k];
        if (used[k] || std::find(chain.begin(), chain.end(), k) != chain.end()) continue;
        if (c.color == last.color) continue;
        if (chain.size() >= 2 && c.color != comps[chain[chain.size() - 2]].color) continue;
        // Blurred bands may share a boundary row with their neighbours.
        if (c.y0 <= last.y0 || c.y1 <= last.y1 || c.y0 > last.y1 + config.band_gap) continue;
        // An occluder can shorten a band from one side only.
        if (absdiff(c.x0, last.x0) > config.band_x_tolerance && absdiff(c.x1, last.x1) > config.band_x_tolerance) continue;
        next = k;
      }
      if (!next) break;
      chain.push_back(*next);
    }
    if (chain.size() < config.min_bands) continue;
    std::size_t x0 = W, y0 = H, x1 = 0, y1 = 0;
    for (std::size_t k : chain) {
      used[k] = true;
      x0 = std::min(x0, comps[k].x0);
      y0 = std::min(y0, comps[k].y0);
      x1 = std::max(x1, comps[k].x1);
      y1 = std::max(y1, comps[k].y1);
    }
    const int a = static_cast<int>(comps[chain[0]].color), b = static_cast<int>(comps[chain[1]].color);
    const double area = static_cast<double>((x1 - x0) * (y1 - y0));
    out.push_back({to_box(x0, y0, x1, y1, image), count_in(x0, y0, x1, y1, a, b) / area,
                   "a " + data::color_name(comps[chain[0]].color) + " and " + data::color_name(comps[chain[1]].color) +
                       " striped square"});
  }

  // Full-box fill of an inscribed ellipse is pi/4; halfway to 1 separates the shapes.
  const double round_fill = (1.0 + std::numbers::pi / 4.0) / 2.0;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const Component& c = comps[i];
    if (used[i] || c.pixels < config.min_area) continue;
    const double area = static_cast<double>((c.x1 - c.x0) * (c.y1 - c.y0));
    const int k = static_cast<int>(c.color);
    const double fill = count_in(c.x0, c.y0, c.x1, c.y1, k, k) / area;
    const std::string shape = fill < round_fill ? " circle" : " square";
    out.push_back({to_box(c.x0, c.y0, c.x1, c.y1, image), fill, "a " + data::color_name(c.color) + shape});
  }
  return out;
}

FeatureExtractor::FeatureExtractor(std::size_t dim, std::size_t grid, std::uint64_t seed) : grid_(grid) {
  if (dim == 0 || grid == 0) throw ValidationError("feature extractor sizes must be positive");
  const std::size_t in = grid * grid * 3;
  nn::Rng rng(seed);
  projection_.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(dim));
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (Eigen::Index r = 0; r < projection_.rows(); ++r)
    for (Eigen::Index c = 0; c < projection_.cols(); ++c) projection_(r, c) = s * rng.normal();
}

Eigen::VectorXd FeatureExtractor::operator()(const data::Image& image) const {
  if (image.width() % grid_ != 0 || image.height() % grid_ != 0) {
    throw DimensionError("image size must be a multiple of the feature grid");
  }
  const std::size_t bw = image.width() / grid_, bh = image.height() / grid_;
  Eigen::RowVectorXd pooled = Eigen::RowVectorXd::Zero(projection_.rows());
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      const data::Rgb c = image.at(x, y);
      const std::size_t cell = (y / bh) * grid_ + x / bw;
      for (int k = 0; k < 3; ++k) pooled[static_cast<Eigen::Index>(cell * 3 + k)] += c[k] / 255.0;
    }
  }
  pooled /= static_cast<double>(bw * bh);
  return (pooled * projection_).transpose();
}

Eigen::MatrixXd FeatureExtractor::batch(const std::vector<data::Image>& images) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), projection_.cols());
  for (std::size_t i = 0; i < images.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = (*this)(images[i]).transpose();
  return out;
}

}  // namespace ifal::eval
