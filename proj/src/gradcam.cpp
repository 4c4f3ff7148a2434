// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/gradcam.hpp"

#include <algorithm>
#include <fstream>

#include "lesionaid/csv.hpp"

namespace lesionaid {

Heatmap gradcam_from(std::span<const double> activations, std::span<const double> gradients, std::size_t grid_h,
                     std::size_t grid_w, std::size_t channels) {
  const std::size_t cells = grid_h * grid_w;
  if (activations.size() != cells * channels || gradients.size() != cells * channels) {
    throw ShapeError("gradcam inputs do not match a " + std::to_string(grid_h) + "x" + std::to_string(grid_w) + "x" +
                     std::to_string(channels) + " grid");
  }
  std::vector<double> w(channels, 0.0);
  for (std::size_t i = 0; i < cells; ++i)
    for (std::size_t d = 0; d < channels; ++d) w[d] += gradients[i * channels + d];
  for (auto& x : w) x /= static_cast<double>(cells);

  Heatmap h;
  h.grid_h = grid_h;
  h.grid_w = grid_w;
  h.raw.assign(cells, 0.0);
  double peak = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    double s = 0;
    for (std::size_t d = 0; d < channels; ++d) s += w[d] * activations[i * channels + d];
    h.raw[i] = std::max(0.0, s);
    peak = std::max(peak, h.raw[i]);
  }
  h.degenerate = peak <= 0.0;
  h.values.assign(cells, 0.0);
  if (!h.degenerate) {
    for (std::size_t i = 0; i < cells; ++i) h.values[i] = h.raw[i] / peak;
  }
  return h;
}

namespace {

void upsample(Heatmap& h, std::size_t height, std::size_t width) {
  Image grid(h.grid_h, h.grid_w, 1);
  for (std::size_t i = 0; i < h.values.size(); ++i) grid.pixels[i] = static_cast<float>(h.values[i]);
  const Image up = resize_bilinear(grid, height, width);
  h.height = height;
  h.width = width;
  h.upsampled.assign(up.pixels.begin(), up.pixels.end());
  for (auto& v : h.upsampled) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace

Heatmap gradcam(const VitParams<float>& params, const Image& image, int target_class) {
  const auto& cfg = params.config;
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= cfg.num_classes) {
    throw ConfigError("target class " + std::to_string(target_class) + " outside the classifier's classes");
  }
  if (image.height != cfg.image_height || image.width != cfg.image_width || image.channels != cfg.channels) {
    throw ShapeError("image does not match the classifier input");
  }
  const bool grad_was_on = GradMode::enabled();
  GradMode::set_enabled(true);
  VitTrace<float> trace;
  auto logits = vit_forward<float>(params, patchify_batch<float>({&image}, cfg.patch), &trace);
  std::vector<float> pick(cfg.num_classes, 0.0f);
  pick[static_cast<std::size_t>(target_class)] = 1.0f;
  auto score = sum(mul(logits, Tensor<float>::from({1, cfg.num_classes}, pick)));
  score.backward();

  const std::size_t d = cfg.embed_dim, cells = cfg.num_patches();
  const auto act = trace.last_normed.data();
  const auto grad = trace.last_normed.grad();
  std::vector<double> a(cells * d), g(cells * d, 0.0);
  // Row 0 is the class token.
  for (std::size_t i = 0; i < cells * d; ++i) {
    a[i] = act[d + i];
    if (!grad.empty()) g[i] = grad[d + i];
  }
  for (auto t : params.parameters()) t.zero_grad();
  GradMode::set_enabled(grad_was_on);

  Heatmap h = gradcam_from(a, g, cfg.image_height / cfg.patch, cfg.image_width / cfg.patch, d);
  upsample(h, image.height, image.width);
  return h;
}

double mass_inside(const Heatmap& heatmap, std::span<const std::uint8_t> mask) {
  if (mask.size() != heatmap.upsampled.size()) throw ShapeError("mask size does not match the heatmap");
  double in = 0, total = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    total += heatmap.upsampled[i];
    if (mask[i]) in += heatmap.upsampled[i];
  }
  return total > 0 ? in / total : 0.0;
}

void write_heatmap(const Heatmap& heatmap, const Image& image, const std::filesystem::path& gray_png,
                   const std::filesystem::path& overlay_png, const std::filesystem::path& grid_csv) {
  Image gray(heatmap.height, heatmap.width, 1);
  for (std::size_t i = 0; i < heatmap.upsampled.size(); ++i) gray.pixels[i] = static_cast<float>(heatmap.upsampled[i]);
  write_png(gray_png, gray);

  // Blue-to-red ramp blended over the input.
  constexpr float kAlpha = 0.4f;
  Image overlay = image;
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x) {
      const float v = static_cast<float>(heatmap.upsampled[y * image.width + x]);
      const float color[3] = {v, 0.0f, 1.0f - v};
      for (std::size_t c = 0; c < std::min<std::size_t>(3, image.channels); ++c) {
        overlay.at(y, x, c) = (1.0f - kAlpha) * image.at(y, x, c) + kAlpha * color[c];
      }
    }
  write_png(overlay_png, overlay);

  std::ofstream os(grid_csv, std::ios::trunc);
  if (!os) throw DatasetError("cannot write '" + grid_csv.string() + "'");
  os << "row,col,value\n";
  for (std::size_t r = 0; r < heatmap.grid_h; ++r)
    for (std::size_t c = 0; c < heatmap.grid_w; ++c) {
      os << r << ',' << c << ',' << format_number(heatmap.raw[r * heatmap.grid_w + c]) << '\n';
    }
}

}  // namespace lesionaid
