// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace ifal::data {

using Rgb = std::array<std::uint8_t, 3>;

// 8-bit RGB raster, row-major, origin top-left.
class Image {
 public:
  Image() = default;
  Image(std::size_t width, std::size_t height, Rgb fill = {0, 0, 0});

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  Rgb at(std::size_t x, std::size_t y) const;
  void set(std::size_t x, std::size_t y, Rgb c);

  const std::vector<std::uint8_t>& bytes() const { return pixels_; }
  std::vector<std::uint8_t>& bytes() { return pixels_; }

  // Pixels [x0, x1) x [y0, y1), clipped to the image.
  Image crop(std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1) const;

  bool operator==(const Image&) const = default;

 private:
  std::size_t width_ = 0, height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Throws FormatError on I/O or decode failure.
void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

}  // namespace ifal::data
