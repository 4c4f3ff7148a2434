// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Gradient-weighted class activation maps for the ViT classifier. The
// feature maps are the patch tokens entering the last encoder layer's
// attention (its LN1 output), laid out on the patch grid with D channels.

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "lesionaid/vit.hpp"

namespace lesionaid {

struct Heatmap {
  std::size_t grid_h = 0, grid_w = 0;
  std::vector<double> raw;     // ReLU(sum_d w_d A_d) before normalization
  std::vector<double> values;  // raw / max(raw), in [0, 1]
  std::size_t height = 0, width = 0;
  std::vector<double> upsampled;  // bilinear to the image size
  bool degenerate = false;        // raw map identically zero
};

// Core computation on activations A[cells, D] and dlogit/dA[cells, D]:
// w_d = mean over cells of the gradient, map = ReLU(A w).
Heatmap gradcam_from(std::span<const double> activations, std::span<const double> gradients, std::size_t grid_h,
                     std::size_t grid_w, std::size_t channels);

// Also upsamples to the image size.
Heatmap gradcam(const VitParams<float>& params, const Image& image, int target_class);

// Fraction of heatmap mass (sum of upsampled values) inside a 0/1 mask.
double mass_inside(const Heatmap& heatmap, std::span<const std::uint8_t> mask);

// Grayscale heatmap, RGB overlay at alpha 0.4, and the raw grid as CSV.
void write_heatmap(const Heatmap& heatmap, const Image& image, const std::filesystem::path& gray_png,
                   const std::filesystem::path& overlay_png, const std::filesystem::path& grid_csv);

}  // namespace lesionaid
