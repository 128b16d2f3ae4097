// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifal/nn/tensor.hpp"

namespace ifal::layout {

// Axis-aligned box in normalized canvas coordinates, [x, y, w, h] with the origin top-left.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  bool operator==(const BBox&) const = default;
};

// Slack allowed on the x+w <= 1 and y+h <= 1 bounds for rounding.
inline constexpr double kBoxSlack = 1e-9;

bool is_valid(const BBox& b);
// Throws ValidationError describing the first violated constraint.
void validate(const BBox& b, const std::string& where = "box");

struct InstanceDescriptor {
  BBox bbox;
  std::string description;
};

struct LayoutSpec {
  std::string caption;
  std::vector<InstanceDescriptor> instances;
};

inline constexpr std::size_t kDefaultMaxInstances = 10;

void validate(const LayoutSpec& spec, std::size_t max_instances = kDefaultMaxInstances);

// Binary occupancy grid at latent resolution, row-major (row = y).
class RegionMask {
 public:
  RegionMask(std::size_t h, std::size_t w) : h_(h), w_(w), cells_(h * w, 0) {}

  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  std::size_t size() const { return cells_.size(); }
  bool at(std::size_t y, std::size_t x) const { return cells_[y * w_ + x] != 0; }
  bool operator[](std::size_t i) const { return cells_[i] != 0; }
  void set(std::size_t y, std::size_t x, bool v = true) { cells_[y * w_ + x] = v ? 1 : 0; }
  std::size_t count() const;
  bool same_grid(const RegionMask& o) const { return h_ == o.h_ && w_ == o.w_; }

 private:
  std::size_t h_, w_;
  std::vector<std::uint8_t> cells_;
};

// A cell is covered iff its centre lies in [x, x+w) x [y, y+h). If no centre
// does, the single cell containing the box centre is covered instead.
RegionMask rasterize(const BBox& bbox, std::size_t h_lat, std::size_t w_lat);

// [h*w, 1] column: 0 on the region, -inf elsewhere.
nn::Tensor additive_mask(const RegionMask& region);

std::size_t instance_area(const RegionMask& region);
std::size_t union_area(std::span<const RegionMask> regions);

// [h*w, 1] column: 1 where no region covers the cell, else 0.
nn::Tensor background_mask(std::span<const RegionMask> regions, std::size_t h_lat, std::size_t w_lat);

// JSON form: {"caption": str, "instances": [{"box": [x,y,w,h], "desc": str}, ...]}.
// Parsing errors are ValidationError messages that name the failing field path.
LayoutSpec layout_from_json(const nlohmann::json& j);
nlohmann::json layout_to_json(const LayoutSpec& spec);
LayoutSpec load_layout(const std::filesystem::path& path);
void save_layout(const std::filesystem::path& path, const LayoutSpec& spec);

}  // namespace ifal::layout
