// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/layout/layout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "ifal/errors.hpp"

namespace ifal::layout {

bool is_valid(const BBox& b) {
  return std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.w) && std::isfinite(b.h) && b.x >= 0.0 &&
         b.y >= 0.0 && b.w > 0.0 && b.h > 0.0 && b.x + b.w <= 1.0 + kBoxSlack && b.y + b.h <= 1.0 + kBoxSlack;
}

void validate(const BBox& b, const std::string& where) {
  std::ostringstream why;
  if (!(std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.w) && std::isfinite(b.h))) {
    why << "non-finite coordinate";
  } else if (b.x < 0.0 || b.y < 0.0) {
    why << "negative origin";
  } else if (b.w <= 0.0 || b.h <= 0.0) {
    why << "non-positive width or height";
  } else if (b.x + b.w > 1.0 + kBoxSlack || b.y + b.h > 1.0 + kBoxSlack) {
    why << "extends past the canvas";
  } else {
    return;
  }
  throw ValidationError(where + ": " + why.str() + " in [" + std::to_string(b.x) + ", " + std::to_string(b.y) +
                        ", " + std::to_string(b.w) + ", " + std::to_string(b.h) + "]");
}

void validate(const LayoutSpec& spec, std::size_t max_instances) {
  if (spec.instances.size() > max_instances) {
    throw ValidationError("instances: " + std::to_string(spec.instances.size()) + " exceeds the maximum of " +
                          std::to_string(max_instances));
  }
  for (std::size_t i = 0; i < spec.instances.size(); ++i) {
    const std::string where = "instances[" + std::to_string(i) + "]";
    validate(spec.instances[i].bbox, where + ".box");
    if (spec.instances[i].description.empty()) throw ValidationError(where + ".desc: empty description");
  }
}

std::size_t RegionMask::count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

RegionMask rasterize(const BBox& bbox, std::size_t h_lat, std::size_t w_lat) {
  if (h_lat == 0 || w_lat == 0) throw ValidationError("rasterize: grid must be at least 1x1");
  validate(bbox);
  RegionMask mask(h_lat, w_lat);
  for (std::size_t r = 0; r < h_lat; ++r) {
    const double cy = (static_cast<double>(r) + 0.5) / static_cast<double>(h_lat);
    if (cy < bbox.y || cy >= bbox.bottom()) continue;
    for (std::size_t c = 0; c < w_lat; ++c) {
      const double cx = (static_cast<double>(c) + 0.5) / static_cast<double>(w_lat);
      if (cx >= bbox.x && cx < bbox.right()) mask.set(r, c);
    }
  }
  if (mask.count() == 0) {
    auto cell = [](double v, std::size_t n) {
      const auto i = static_cast<long>(std::floor(v * static_cast<double>(n)));
      return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1));
    };
    mask.set(cell(bbox.y + 0.5 * bbox.h, h_lat), cell(bbox.x + 0.5 * bbox.w, w_lat));
  }
  return mask;
}

nn::Tensor additive_mask(const RegionMask& region) {
  nn::Tensor m({region.size(), 1}, 0.0);
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (!region[i]) m[i] = -std::numeric_limits<double>::infinity();
  }
  return m;
}

std::size_t instance_area(const RegionMask& region) { return region.count(); }

namespace {
void require_same_grid(std::span<const RegionMask> regions) {
  for (const auto& r : regions) {
    if (!r.same_grid(regions.front())) throw DimensionError("region masks on different grids");
  }
}
}  // namespace

std::size_t union_area(std::span<const RegionMask> regions) {
  if (regions.empty()) return 0;
  require_same_grid(regions);
  std::size_t n = 0;
  for (std::size_t i = 0; i < regions.front().size(); ++i) {
    n += std::any_of(regions.begin(), regions.end(), [i](const RegionMask& r) { return r[i]; }) ? 1 : 0;
  }
  return n;
}

nn::Tensor background_mask(std::span<const RegionMask> regions, std::size_t h_lat, std::size_t w_lat) {
  nn::Tensor bg({h_lat * w_lat, 1}, 1.0);
  for (const auto& r : regions) {
    if (r.height() != h_lat || r.width() != w_lat) throw DimensionError("background_mask: region grid mismatch");
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r[i]) bg[i] = 0.0;
    }
  }
  return bg;
}

namespace {

double number_at(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError(path + ": expected a number");
  return j.get<double>();
}

std::string string_at(const nlohmann::json& j, const std::string& path) {
  if (!j.is_string()) throw ValidationError(path + ": expected a string");
  return j.get<std::string>();
}

}  // namespace

LayoutSpec layout_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("$: expected an object");
  LayoutSpec spec;
  if (!j.contains("caption")) throw ValidationError("caption: missing");
  spec.caption = string_at(j["caption"], "caption");
  if (!j.contains("instances")) throw ValidationError("instances: missing");
  const auto& inst = j["instances"];
  if (!inst.is_array()) throw ValidationError("instances: expected an array");
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const std::string where = "instances[" + std::to_string(i) + "]";
    const auto& e = inst[i];
    if (!e.is_object()) throw ValidationError(where + ": expected an object");
    if (!e.contains("box")) throw ValidationError(where + ".box: missing");
    const auto& box = e["box"];
    if (!box.is_array() || box.size() != 4) throw ValidationError(where + ".box: expected [x, y, w, h]");
    BBox b{number_at(box[0], where + ".box[0]"), number_at(box[1], where + ".box[1]"),
           number_at(box[2], where + ".box[2]"), number_at(box[3], where + ".box[3]")};
    validate(b, where + ".box");
    if (!e.contains("desc")) throw ValidationError(where + ".desc: missing");
    std::string desc = string_at(e["desc"], where + ".desc");
    if (desc.empty()) throw ValidationError(where + ".desc: empty description");
    spec.instances.push_back({b, std::move(desc)});
  }
  validate(spec);
  return spec;
}

nlohmann::json layout_to_json(const LayoutSpec& spec) {
  nlohmann::json j;
  j["caption"] = spec.caption;
  j["instances"] = nlohmann::json::array();
  for (const auto& inst : spec.instances) {
    j["instances"].push_back(
        {{"box", {inst.bbox.x, inst.bbox.y, inst.bbox.w, inst.bbox.h}}, {"desc", inst.description}});
  }
  return j;
}

LayoutSpec load_layout(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open layout " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("$: invalid JSON (" + std::string(e.what()) + ")");
  }
  return layout_from_json(j);
}

void save_layout(const std::filesystem::path& path, const LayoutSpec& spec) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write layout " + path.string());
  out << layout_to_json(spec).dump(2) << '\n';
}

}  // namespace ifal::layout
