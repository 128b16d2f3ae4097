// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/data/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>

#include "ifal/errors.hpp"

namespace ifal::data {

Image::Image(std::size_t width, std::size_t height, Rgb fill)
    : width_(width), height_(height), pixels_(width * height * 3) {
  for (std::size_t i = 0; i < width * height; ++i) std::memcpy(&pixels_[3 * i], fill.data(), 3);
}

Rgb Image::at(std::size_t x, std::size_t y) const {
  const std::size_t i = 3 * (y * width_ + x);
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void Image::set(std::size_t x, std::size_t y, Rgb c) {
  const std::size_t i = 3 * (y * width_ + x);
  pixels_[i] = c[0];
  pixels_[i + 1] = c[1];
  pixels_[i + 2] = c[2];
}

Image Image::crop(std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1) const {
  x1 = std::min(x1, width_);
  y1 = std::min(y1, height_);
  x0 = std::min(x0, x1);
  y0 = std::min(y0, y1);
  Image out(x1 - x0, y1 - y0);
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) out.set(x - x0, y - y0, at(x, y));
  return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.bytes().data(), 0, nullptr)) {
    throw FormatError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw FormatError("cannot read PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  Image out(png.width, png.height);
  if (!png_image_finish_read(&png, nullptr, out.bytes().data(), 0, nullptr)) {
    png_image_free(&png);
    throw FormatError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  return out;
}

}  // namespace ifal::data
