// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ifal/data/image.hpp"
#include "ifal/layout/layout.hpp"
#include "ifal/nn/rng.hpp"

namespace ifal::data {

enum class Color { kRed, kGreen, kBlue, kYellow, kCyan, kMagenta };
inline constexpr std::size_t kPaletteSize = 6;

Rgb color_rgb(Color c);
std::string color_name(Color c);
std::optional<Color> color_from_name(std::string_view name);

// Nearest palette entry for a pixel; nullopt when black or white is nearer
// (background). Ties go to the lower palette index.
std::optional<Color> classify_pixel(Rgb px);

enum class Shape { kSquare, kCircle, kStripedSquare };

struct ShapeInstance {
  Shape shape = Shape::kSquare;
  Color primary = Color::kRed;
  std::optional<Color> secondary;  // striped squares only
  layout::BBox bbox;
};

struct ShapeScene {
  std::vector<ShapeInstance> instances;
  Rgb background{0, 0, 0};
  std::uint64_t seed = 0;
};

struct SceneConfig {
  std::size_t image_size = 64;
  std::size_t grid = 16;  // boxes snap to 1/grid
  std::size_t min_instances = 1;
  std::size_t max_instances = 4;
  std::size_t min_cells = 4;  // box side range, in grid cells
  std::size_t max_cells = 8;
  double p_circle = 1.0 / 3.0;
  double p_striped = 1.0 / 3.0;
  double max_iou = 0.3;
  // Intersection may cover at most this fraction of the smaller box, so painted
  // instances stay recognizable.
  double max_overlap = 0.1;
  std::size_t max_attempts = 1000;
  Rgb background{0, 0, 0};

  void validate() const;
};

void to_json(nlohmann::json& j, const SceneConfig& c);
void from_json(const nlohmann::json& j, SceneConfig& c);

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rejection-samples boxes under the overlap constraints; instances whose boxes
// touch never share a color. Throws GenerationError after max_attempts rejections.
ShapeScene gen_scene(nn::Rng& rng, const SceneConfig& config);
ShapeScene gen_scene(std::uint64_t seed, const SceneConfig& config);

// Painter's algorithm: later instances over earlier ones.
Image render(const ShapeScene& scene, std::size_t image_size = 64);

// "(a|an) <color>[ and <color2> striped] <shape>".
std::string describe(const ShapeInstance& instance);
// Descriptions joined with ", ".
std::string caption(const ShapeScene& scene);
layout::LayoutSpec to_layout(const ShapeScene& scene);

struct ParsedDescription {
  Shape shape = Shape::kSquare;
  Color primary = Color::kRed;
  std::optional<Color> secondary;
};

// Throws ValidationError when the text does not follow the template grammar.
ParsedDescription parse_description(std::string_view text);

struct PixelRect {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::size_t width() const { return x1 - x0; }
  std::size_t height() const { return y1 - y0; }
};

// Smallest pixel rectangle containing the box.
PixelRect box_pixels(const layout::BBox& bbox, std::size_t width, std::size_t height);

struct VerifierThresholds {
  double color_mass = 0.6;         // described colors inside the inscribed ellipse
  double stripe_color_mass = 0.25; // each stripe color
  std::size_t min_alternations = 3;
  double corner_occupancy = 0.5;   // squares at or above, circles below
};

struct CropStats {
  double primary_mass = 0.0;
  double secondary_mass = 0.0;
  double corner_occupancy = 0.0;
  std::size_t alternations = 0;
};

CropStats crop_stats(const Image& image, const layout::BBox& bbox, const ParsedDescription& desc);

// Programmatic stand-in for a vision-language check of one cropped instance.
bool verify(const Image& image, const layout::BBox& bbox, std::string_view description,
            const VerifierThresholds& thresholds = {});

struct CorpusConfig {
  std::uint64_t seed = 1234;
  std::map<std::string, std::size_t> splits{{"train", 1000}, {"eval", 100}};
  SceneConfig scene;

  void validate() const;
};

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

struct CorpusEntry {
  std::string image_path;   // relative to the corpus root
  std::string layout_path;  // relative to the corpus root
  std::uint64_t seed = 0;
};

std::uint64_t sample_seed(std::uint64_t corpus_seed, std::string_view split, std::size_t index);

// Writes <root>/<split>/{images,layouts}/NNNNN.* and <root>/<split>/manifest.jsonl.
void write_corpus(const CorpusConfig& config, const std::filesystem::path& root);
std::vector<CorpusEntry> read_manifest(const std::filesystem::path& root, const std::string& split);

}  // namespace ifal::data
