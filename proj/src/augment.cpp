// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lesionaid/tensor.hpp"

namespace lesionaid {

AugmentConfig AugmentConfig::table_one() {
  AugmentConfig c;
  c.normalize = true;
  c.flip_horizontal = true;
  c.flip_vertical = true;
  c.rotation_factor = 0.75;
  c.zoom_factor = 0.05;
  c.brightness_lo = 0.01;
  c.brightness_hi = 0.5;
  return c;
}

void AugmentConfig::validate() const {
  if (!(rotation_factor >= 0.0 && rotation_factor <= 1.0)) throw ConfigError("rotation_factor must lie in [0, 1]");
  if (!(zoom_factor >= 0.0 && zoom_factor < 1.0)) throw ConfigError("zoom_factor must lie in [0, 1)");
  if (!(brightness_lo >= 0.0 && brightness_lo <= brightness_hi)) {
    throw ConfigError("brightness range must satisfy 0 <= lo <= hi");
  }
}

AugmentDraw draw_augmentation(const AugmentConfig& cfg, Rng& rng) {
  // Always five draws so enabling one step never shifts the others.
  const double u_h = rng.uniform(), u_v = rng.uniform(), u_rot = rng.uniform(), u_zoom = rng.uniform(),
               u_bright = rng.uniform();
  AugmentDraw d;
  d.flip_h = cfg.flip_horizontal && u_h < 0.5;
  d.flip_v = cfg.flip_vertical && u_v < 0.5;
  const double max_angle = cfg.rotation_factor * 2.0 * std::numbers::pi;
  d.angle = cfg.rotation_factor > 0.0 ? -max_angle + 2.0 * max_angle * u_rot : 0.0;
  d.zoom = cfg.zoom_factor > 0.0 ? 1.0 - cfg.zoom_factor + 2.0 * cfg.zoom_factor * u_zoom : 1.0;
  d.brightness = cfg.brightness_lo + (cfg.brightness_hi - cfg.brightness_lo) * u_bright;
  return d;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

Image flip_vertical(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(img.height - 1 - y, x, c);
  return out;
}

namespace {

// Half-sample symmetric reflection: ... c b a | a b c ... | c b a ...
std::size_t reflect_index(long i, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long>(n)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

float sample_reflect(const Image& img, double fy, double fx, std::size_t c) {
  const double y0f = std::floor(fy), x0f = std::floor(fx);
  const double wy = fy - y0f, wx = fx - x0f;
  const long y0 = static_cast<long>(y0f), x0 = static_cast<long>(x0f);
  const std::size_t ya = reflect_index(y0, img.height), yb = reflect_index(y0 + 1, img.height);
  const std::size_t xa = reflect_index(x0, img.width), xb = reflect_index(x0 + 1, img.width);
  const double top = (1 - wx) * img.at(ya, xa, c) + wx * img.at(ya, xb, c);
  const double bot = (1 - wx) * img.at(yb, xa, c) + wx * img.at(yb, xb, c);
  return static_cast<float>((1 - wy) * top + wy * bot);
}

// Inverse-maps every output pixel centre through `map` and resamples.
template <typename Map>
Image warp(const Image& img, Map map) {
  Image out(img.height, img.width, img.channels);
  const double cy = 0.5 * static_cast<double>(img.height), cx = 0.5 * static_cast<double>(img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const auto [sy, sx] = map(static_cast<double>(y) + 0.5 - cy, static_cast<double>(x) + 0.5 - cx);
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = sample_reflect(img, cy + sy - 0.5, cx + sx - 0.5, c);
    }
  return out;
}

}  // namespace

Image rotate_reflect(const Image& img, double angle) {
  if (angle == 0.0) return img;
  const double c = std::cos(angle), s = std::sin(angle);
  // Output = source rotated by `angle`; sample the source at R(-angle) p.
  return warp(img, [c, s](double dy, double dx) { return std::pair{-s * dx + c * dy, c * dx + s * dy}; });
}

Image zoom_reflect(const Image& img, double scale) {
  if (scale == 1.0) return img;
  return warp(img, [scale](double dy, double dx) { return std::pair{dy / scale, dx / scale}; });
}

ImageSample apply_augmentation(const ImageSample& sample, const AugmentConfig& cfg, const AugmentDraw& draw) {
  ImageSample out = sample;
  out.mask.clear();
  Image img = sample.pixels;
  if (draw.flip_h) img = flip_horizontal(img);
  if (draw.flip_v) img = flip_vertical(img);
  img = rotate_reflect(img, draw.angle);
  img = zoom_reflect(img, draw.zoom);
  if (draw.brightness != 0.0 || cfg.normalize) {
    const auto delta = static_cast<float>(draw.brightness);
    for (auto& p : img.pixels) p = std::clamp(p + delta, 0.0f, 1.0f);
  }
  out.pixels = std::move(img);
  return out;
}

ImageSample augment_one(const ImageSample& sample, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  return apply_augmentation(sample, cfg, draw_augmentation(cfg, rng));
}

Rng augment_rng(std::uint64_t seed, std::size_t epoch, const std::string& id) {
  return Rng(seed).split(epoch).split(Rng::hash(id));
}

ImageSample augment_for_epoch(const ImageSample& sample, const AugmentConfig& cfg, std::uint64_t seed,
                              std::size_t epoch) {
  Rng rng = augment_rng(seed, epoch, sample.id);
  return augment_one(sample, cfg, rng);
}

Dataset augment_epoch(const Dataset& dataset, const AugmentConfig& cfg, std::uint64_t seed, std::size_t epoch) {
  Dataset out;
  out.reserve(dataset.size());
  for (const auto& s : dataset) out.push_back(augment_for_epoch(s, cfg, seed, epoch));
  return out;
}

Dataset balance_merge(const Dataset& real, const Dataset& synthetic) {
  const ClassHistogram hist = class_histogram(real);
  const std::size_t target = hist.max_count();
  std::array<std::vector<const ImageSample*>, kNumClasses> pool;
  for (const auto& s : synthetic) {
    if (s.provenance != Provenance::kSynthetic) {
      throw DatasetError("balance_merge: sample " + s.id + " in the synthetic pool is not flagged synthetic");
    }
    if (!real.empty() && (s.pixels.height != real[0].pixels.height || s.pixels.width != real[0].pixels.width)) {
      throw ShapeError("balance_merge: synthetic sample " + s.id + " does not match the real image size");
    }
    pool.at(static_cast<std::size_t>(s.label)).push_back(&s);
  }
  Dataset merged = real;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (hist.counts[c] == 0) continue;
    const std::size_t deficit = target - hist.counts[c];
    if (pool[c].size() < deficit) {
      throw DatasetError("balance_merge: class " + std::string(kClassNames[c]) + " needs " + std::to_string(deficit) +
                         " synthetic samples but only " + std::to_string(pool[c].size()) +
                         " are available (shortfall " + std::to_string(deficit - pool[c].size()) + ")");
    }
    for (std::size_t i = 0; i < deficit; ++i) merged.push_back(*pool[c][i]);
  }
  return merged;
}

}  // namespace lesionaid
