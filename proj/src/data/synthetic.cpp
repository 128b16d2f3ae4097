// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/data/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ifal/errors.hpp"

namespace ifal::data {

namespace {

constexpr std::array<const char*, kPaletteSize> kNames = {"red", "green", "blue", "yellow", "cyan", "magenta"};
constexpr std::array<Rgb, kPaletteSize> kColors = {
    Rgb{255, 0, 0}, Rgb{0, 255, 0}, Rgb{0, 0, 255}, Rgb{255, 255, 0}, Rgb{0, 255, 255}, Rgb{255, 0, 255}};

int dist2(Rgb a, Rgb b) {
  int d = 0;
  for (int i = 0; i < 3; ++i) d += (int(a[i]) - int(b[i])) * (int(a[i]) - int(b[i]));
  return d;
}

bool is_background(Rgb c) { return c == Rgb{0, 0, 0} || c == Rgb{255, 255, 255}; }

double box_iou(const layout::BBox& a, const layout::BBox& b) {
  const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

double intersection(const layout::BBox& a, const layout::BBox& b) {
  const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  return ix * iy;
}

// Overlapping or sharing an edge or corner.
bool touching(const layout::BBox& a, const layout::BBox& b) {
  constexpr double eps = 1e-9;
  return a.x <= b.right() + eps && b.x <= a.right() + eps && a.y <= b.bottom() + eps && b.y <= a.bottom() + eps;
}

bool uses(const ShapeInstance& s, Color c) { return s.primary == c || (s.secondary && *s.secondary == c); }

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string index_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05zu", i);
  return buf;
}

}  // namespace

Rgb color_rgb(Color c) { return kColors[static_cast<std::size_t>(c)]; }
std::string color_name(Color c) { return kNames[static_cast<std::size_t>(c)]; }

std::optional<Color> color_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kPaletteSize; ++i) {
    if (name == kNames[i]) return static_cast<Color>(i);
  }
  return std::nullopt;
}

std::optional<Color> classify_pixel(Rgb px) {
  int best = std::min(dist2(px, {0, 0, 0}), dist2(px, {255, 255, 255}));
  std::optional<Color> out;
  for (std::size_t i = 0; i < kPaletteSize; ++i) {
    const int d = dist2(px, kColors[i]);
    if (d < best) {
      best = d;
      out = static_cast<Color>(i);
    }
  }
  return out;
}

void SceneConfig::validate() const {
  if (image_size == 0 || grid == 0 || image_size % grid != 0) {
    throw ValidationError("scene.image_size must be a positive multiple of scene.grid");
  }
  if (min_instances < 1 || max_instances < min_instances) {
    throw ValidationError("scene instance counts must satisfy 1 <= min_instances <= max_instances");
  }
  if (min_cells < 1 || max_cells < min_cells || max_cells > grid) {
    throw ValidationError("scene box sides must satisfy 1 <= min_cells <= max_cells <= grid");
  }
  for (double p : {p_circle, p_striped}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("scene shape probabilities must lie in [0, 1]");
  }
  if (p_circle + p_striped > 1.0 + 1e-12) throw ValidationError("scene.p_circle + scene.p_striped exceeds 1");
  if (!(max_iou >= 0.0 && max_iou <= 1.0)) throw ValidationError("scene.max_iou must lie in [0, 1]");
  if (!(max_overlap >= 0.0 && max_overlap <= 1.0)) throw ValidationError("scene.max_overlap must lie in [0, 1]");
  if (max_attempts == 0) throw ValidationError("scene.max_attempts must be positive");
  if (!is_background(background)) throw ValidationError("scene.background must be black or white");
}

void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = {{"image_size", c.image_size}, {"grid", c.grid},
       {"min_instances", c.min_instances}, {"max_instances", c.max_instances},
       {"min_cells", c.min_cells}, {"max_cells", c.max_cells},
       {"p_circle", c.p_circle}, {"p_striped", c.p_striped},
       {"max_iou", c.max_iou}, {"max_overlap", c.max_overlap},
       {"max_attempts", c.max_attempts}, {"background", c.background}};
}

void from_json(const nlohmann::json& j, SceneConfig& c) {
  c = SceneConfig{};
  c.image_size = j.value("image_size", c.image_size);
  c.grid = j.value("grid", c.grid);
  c.min_instances = j.value("min_instances", c.min_instances);
  c.max_instances = j.value("max_instances", c.max_instances);
  c.min_cells = j.value("min_cells", c.min_cells);
  c.max_cells = j.value("max_cells", c.max_cells);
  c.p_circle = j.value("p_circle", c.p_circle);
  c.p_striped = j.value("p_striped", c.p_striped);
  c.max_iou = j.value("max_iou", c.max_iou);
  c.max_overlap = j.value("max_overlap", c.max_overlap);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.background = j.value("background", c.background);
}

ShapeScene gen_scene(nn::Rng& rng, const SceneConfig& config) {
  config.validate();
  ShapeScene scene;
  scene.background = config.background;
  const auto n = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(config.min_instances), static_cast<std::int64_t>(config.max_instances)));
  const double g = static_cast<double>(config.grid);
  std::size_t attempts = 0;
  while (scene.instances.size() < n) {
    const auto w = rng.uniform_int(static_cast<std::int64_t>(config.min_cells), static_cast<std::int64_t>(config.max_cells));
    const auto h = rng.uniform_int(static_cast<std::int64_t>(config.min_cells), static_cast<std::int64_t>(config.max_cells));
    const auto x = rng.uniform_int(0, static_cast<std::int64_t>(config.grid) - w);
    const auto y = rng.uniform_int(0, static_cast<std::int64_t>(config.grid) - h);
    const layout::BBox box{x / g, y / g, w / g, h / g};
    bool ok = true;
    for (const auto& other : scene.instances) {
      const double inter = intersection(box, other.bbox);
      if (box_iou(box, other.bbox) > config.max_iou ||
          inter > config.max_overlap * std::min(box.area(), other.bbox.area()) + 1e-12) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      if (++attempts >= config.max_attempts) {
        throw GenerationError("could not place " + std::to_string(n) + " instances within " +
                              std::to_string(config.max_attempts) + " attempts");
      }
      continue;
    }
    // Colors already used by touching neighbours are excluded.
    std::vector<Color> free;
    for (std::size_t i = 0; i < kPaletteSize; ++i) {
      const auto c = static_cast<Color>(i);
      bool taken = false;
      for (const auto& other : scene.instances) taken = taken || (touching(box, other.bbox) && uses(other, c));
      if (!taken) free.push_back(c);
    }
    ShapeInstance inst;
    inst.bbox = box;
    const double u = rng.uniform();
    inst.shape = u < config.p_circle                      ? Shape::kCircle
                 : u < config.p_circle + config.p_striped ? Shape::kStripedSquare
                                                          : Shape::kSquare;
    if (inst.shape == Shape::kStripedSquare && free.size() < 2) inst.shape = Shape::kSquare;
    if (free.empty()) {
      if (++attempts >= config.max_attempts) throw GenerationError("ran out of colors for touching instances");
      continue;
    }
    const auto pi = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(free.size()) - 1));
    inst.primary = free[pi];
    if (inst.shape == Shape::kStripedSquare) {
      free.erase(free.begin() + static_cast<std::ptrdiff_t>(pi));
      inst.secondary = free[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(free.size()) - 1))];
    }
    scene.instances.push_back(inst);
  }
  return scene;
}

ShapeScene gen_scene(std::uint64_t seed, const SceneConfig& config) {
  nn::Rng rng(seed);
  ShapeScene s = gen_scene(rng, config);
  s.seed = seed;
  return s;
}

PixelRect box_pixels(const layout::BBox& bbox, std::size_t width, std::size_t height) {
  constexpr double eps = 1e-9;
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  PixelRect r;
  r.x0 = static_cast<std::size_t>(std::clamp(std::floor(bbox.x * W + eps), 0.0, W));
  r.y0 = static_cast<std::size_t>(std::clamp(std::floor(bbox.y * H + eps), 0.0, H));
  r.x1 = static_cast<std::size_t>(std::clamp(std::ceil(bbox.right() * W - eps), 0.0, W));
  r.y1 = static_cast<std::size_t>(std::clamp(std::ceil(bbox.bottom() * H - eps), 0.0, H));
  r.x1 = std::max(r.x1, std::min(r.x0 + 1, width));
  r.y1 = std::max(r.y1, std::min(r.y0 + 1, height));
  return r;
}

Image render(const ShapeScene& scene, std::size_t image_size) {
  Image img(image_size, image_size, scene.background);
  const double S = static_cast<double>(image_size);
  for (const auto& inst : scene.instances) {
    const PixelRect r = box_pixels(inst.bbox, image_size, image_size);
    const double cx = inst.bbox.x + inst.bbox.w / 2, cy = inst.bbox.y + inst.bbox.h / 2;
    for (std::size_t py = r.y0; py < r.y1; ++py) {
      for (std::size_t px = r.x0; px < r.x1; ++px) {
        const double u = (px + 0.5) / S, v = (py + 0.5) / S;
        if (u < inst.bbox.x || u >= inst.bbox.right() || v < inst.bbox.y || v >= inst.bbox.bottom()) continue;
        Color c = inst.primary;
        if (inst.shape == Shape::kCircle) {
          const double dx = (u - cx) / (inst.bbox.w / 2), dy = (v - cy) / (inst.bbox.h / 2);
          if (dx * dx + dy * dy > 1.0) continue;
        } else if (inst.shape == Shape::kStripedSquare) {
          if (((py - r.y0) / 4) % 2 == 1) c = *inst.secondary;
        }
        img.set(px, py, color_rgb(c));
      }
    }
  }
  return img;
}

std::string describe(const ShapeInstance& instance) {
  const std::string first = color_name(instance.primary);
  const bool vowel = std::string_view("aeiou").find(first[0]) != std::string_view::npos;
  std::string out = vowel ? "an " : "a ";
  out += first;
  if (instance.shape == Shape::kStripedSquare) out += " and " + color_name(*instance.secondary) + " striped";
  out += instance.shape == Shape::kCircle ? " circle" : " square";
  return out;
}

std::string caption(const ShapeScene& scene) {
  std::string out;
  for (const auto& inst : scene.instances) {
    if (!out.empty()) out += ", ";
    out += describe(inst);
  }
  return out;
}

layout::LayoutSpec to_layout(const ShapeScene& scene) {
  layout::LayoutSpec spec;
  spec.caption = caption(scene);
  for (const auto& inst : scene.instances) spec.instances.push_back({inst.bbox, describe(inst)});
  return spec;
}

ParsedDescription parse_description(std::string_view text) {
  const auto words = split_words(text);
  auto fail = [&]() -> ParsedDescription {
    throw ValidationError("description '" + std::string(text) +
                          "' does not match '(a|an) <color>[ and <color> striped] <square|circle>'");
  };
  if (words.size() != 3 && words.size() != 6) return fail();
  if (words[0] != "a" && words[0] != "an") return fail();
  ParsedDescription d;
  const auto primary = color_from_name(words[1]);
  if (!primary) return fail();
  d.primary = *primary;
  const std::string& shape = words.back();
  if (words.size() == 6) {
    const auto secondary = color_from_name(words[3]);
    if (words[2] != "and" || !secondary || words[4] != "striped" || shape != "square" || *secondary == *primary) {
      return fail();
    }
    d.secondary = secondary;
    d.shape = Shape::kStripedSquare;
  } else if (shape == "square") {
    d.shape = Shape::kSquare;
  } else if (shape == "circle") {
    d.shape = Shape::kCircle;
  } else {
    return fail();
  }
  return d;
}

CropStats crop_stats(const Image& image, const layout::BBox& bbox, const ParsedDescription& desc) {
  const PixelRect r = box_pixels(bbox, image.width(), image.height());
  const double cx = (r.x0 + r.x1) / 2.0, cy = (r.y0 + r.y1) / 2.0;
  const double rx = r.width() / 2.0, ry = r.height() / 2.0;
  std::size_t inside = 0, outside = 0, prim = 0, sec = 0, outside_colored = 0;
  std::vector<int> row_labels;
  for (std::size_t y = r.y0; y < r.y1; ++y) {
    std::size_t row_p = 0, row_s = 0;
    for (std::size_t x = r.x0; x < r.x1; ++x) {
      const auto c = classify_pixel(image.at(x, y));
      const bool is_p = c && *c == desc.primary;
      const bool is_s = c && desc.secondary && *c == *desc.secondary;
      const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
      if (dx * dx + dy * dy <= 1.0) {
        ++inside;
        prim += is_p;
        sec += is_s;
        row_p += is_p;
        row_s += is_s;
      } else {
        ++outside;
        outside_colored += is_p || is_s;
      }
    }
    if (row_p + row_s > 0) row_labels.push_back(row_p >= row_s ? 0 : 1);
  }
  CropStats s;
  if (inside > 0) {
    s.primary_mass = static_cast<double>(prim) / static_cast<double>(inside);
    s.secondary_mass = static_cast<double>(sec) / static_cast<double>(inside);
  }
  // Boxes too small to have corners count as fully occupied.
  s.corner_occupancy = outside > 0 ? static_cast<double>(outside_colored) / static_cast<double>(outside) : 1.0;
  for (std::size_t i = 1; i < row_labels.size(); ++i) s.alternations += row_labels[i] != row_labels[i - 1];
  return s;
}

bool verify(const Image& image, const layout::BBox& bbox, std::string_view description,
            const VerifierThresholds& t) {
  const ParsedDescription desc = parse_description(description);
  layout::validate(bbox);
  const CropStats s = crop_stats(image, bbox, desc);
  if (desc.secondary) {
    if (s.primary_mass + s.secondary_mass < t.color_mass) return false;
    if (s.primary_mass < t.stripe_color_mass || s.secondary_mass < t.stripe_color_mass) return false;
    if (s.alternations < t.min_alternations) return false;
  } else if (s.primary_mass < t.color_mass) {
    return false;
  }
  const bool round = s.corner_occupancy < t.corner_occupancy;
  return round == (desc.shape == Shape::kCircle);
}

void CorpusConfig::validate() const {
  scene.validate();
  if (splits.empty()) throw ValidationError("splits must name at least one split");
  for (const auto& [name, n] : splits) {
    if (name.empty() || name.find('/') != std::string::npos) throw ValidationError("invalid split name '" + name + "'");
    if (n == 0) throw ValidationError("splits." + name + " must request at least one sample");
  }
}

void to_json(nlohmann::json& j, const CorpusConfig& c) {
  j = {{"seed", c.seed}, {"splits", c.splits}, {"scene", c.scene}};
}

void from_json(const nlohmann::json& j, CorpusConfig& c) {
  c = CorpusConfig{};
  c.seed = j.value("seed", c.seed);
  if (j.contains("splits")) {
    c.splits.clear();
    for (const auto& [k, v] : j.at("splits").items()) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ValidationError("splits." + k + " must be a non-negative integer");
      }
      c.splits[k] = v.get<std::size_t>();
    }
  }
  if (j.contains("scene")) c.scene = j.at("scene").get<SceneConfig>();
}

std::uint64_t sample_seed(std::uint64_t corpus_seed, std::string_view split, std::size_t index) {
  return nn::derive_seed(nn::derive_seed(corpus_seed, fnv1a(split)), index);
}

void write_corpus(const CorpusConfig& config, const std::filesystem::path& root) {
  config.validate();
  namespace fs = std::filesystem;
  for (const auto& [split, n] : config.splits) {
    const fs::path dir = root / split;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "layouts");
    std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary | std::ios::trunc);
    if (!manifest) throw FormatError("cannot write " + (dir / "manifest.jsonl").string());
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t seed = sample_seed(config.seed, split, i);
      const ShapeScene scene = gen_scene(seed, config.scene);
      const std::string image_rel = split + "/images/" + index_name(i) + ".png";
      const std::string layout_rel = split + "/layouts/" + index_name(i) + ".json";
      write_png(render(scene, config.scene.image_size), root / image_rel);
      layout::save_layout(root / layout_rel, to_layout(scene));
      manifest << nlohmann::json{{"image_path", image_rel}, {"layout_path", layout_rel}, {"seed", seed}}.dump()
               << '\n';
    }
  }
}

std::vector<CorpusEntry> read_manifest(const std::filesystem::path& root, const std::string& split) {
  const auto path = root / split / "manifest.jsonl";
  std::ifstream in(path);
  if (!in) throw FormatError("missing corpus manifest " + path.string());
  std::vector<CorpusEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("image_path").get<std::string>(), j.at("layout_path").get<std::string>(),
                     j.at("seed").get<std::uint64_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ifal::data
