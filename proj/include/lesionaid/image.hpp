// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace lesionaid {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Interleaved H x W x C image with values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c = 3, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
  bool operator==(const Image&) const = default;
};

Image read_image(const std::filesystem::path& path);  // PNG or JPEG, decoded to RGB
Image read_png(const std::filesystem::path& path);
Image read_jpeg(const std::filesystem::path& path);
// 8-bit PNG; 1 channel is written as grayscale, 3 as RGB.
void write_png(const std::filesystem::path& path, const Image& image);

Image resize_bilinear(const Image& src, std::size_t height, std::size_t width);

// CHW float copy, the layout the convolution ops expect.
std::vector<float> to_chw(const Image& image);
Image from_chw(const float* chw, std::size_t channels, std::size_t height, std::size_t width);

}  // namespace lesionaid
