// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Positional/colour augmentation and the real + synthetic class balancing
// merge.

#pragma once

#include <cstdint>

#include "lesionaid/dataset.hpp"
#include "lesionaid/rng.hpp"

namespace lesionaid {

struct AugmentConfig {
  bool normalize = false;
  bool flip_horizontal = false;
  bool flip_vertical = false;
  double rotation_factor = 0.0;  // fraction of a full turn; angle in +-factor * 2pi
  double zoom_factor = 0.0;      // scale drawn from [1 - z, 1 + z]
  double brightness_lo = 0.0;    // additive delta range on [0, 1] pixels
  double brightness_hi = 0.0;
  std::uint64_t seed = 0;

  // Normalize, H+V flips, rotation 0.75, zoom 0.05, brightness [0.01, 0.5].
  static AugmentConfig table_one();

  // Throws ConfigError on out-of-range fields.
  void validate() const;
};

// The random draws behind one augmentation, exposed for testing.
struct AugmentDraw {
  bool flip_h = false;
  bool flip_v = false;
  double angle = 0.0;  // radians
  double zoom = 1.0;
  double brightness = 0.0;
};

AugmentDraw draw_augmentation(const AugmentConfig& cfg, Rng& rng);

// H-flip, V-flip, rotation about the centre (reflect padding), central zoom,
// additive brightness, clamped to [0, 1]. Label and provenance are kept.
ImageSample augment_one(const ImageSample& sample, const AugmentConfig& cfg, Rng& rng);
ImageSample apply_augmentation(const ImageSample& sample, const AugmentConfig& cfg, const AugmentDraw& draw);

Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);
Image rotate_reflect(const Image& img, double angle);
Image zoom_reflect(const Image& img, double scale);

// Stream for a sample in a given epoch, keyed by (seed, epoch, id).
Rng augment_rng(std::uint64_t seed, std::size_t epoch, const std::string& id);
ImageSample augment_for_epoch(const ImageSample& sample, const AugmentConfig& cfg, std::uint64_t seed,
                              std::size_t epoch);
// One augmented variant per sample, in dataset order.
Dataset augment_epoch(const Dataset& dataset, const AugmentConfig& cfg, std::uint64_t seed, std::size_t epoch);

// Tops every class present in `real` up to the largest real class count
// with samples drawn in order from `synthetic`.
Dataset balance_merge(const Dataset& real, const Dataset& synthetic);

}  // namespace lesionaid
