// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Lesion datasets: HAM10000-style ingestion, the synthetic toy-lesion
// generator, class histograms, stratified splits and the on-disk layout
//   <root>/<label>/<id>.png, <root>/manifest.csv, <root>/masks/<id>.png

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lesionaid/image.hpp"

namespace lesionaid {

inline constexpr std::size_t kNumClasses = 7;
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {"akiec", "bcc", "bkl", "df",
                                                                          "mel",   "nv",  "vasc"};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Returns the class index, or nullopt for names outside the taxonomy.
std::optional<int> label_from_name(std::string_view name);
std::string_view label_name(int label);

enum class Provenance { kReal, kSynthetic };
std::string_view provenance_name(Provenance p);

struct ImageSample {
  Image pixels;
  int label = 0;
  std::string id;
  Provenance provenance = Provenance::kReal;
  // Ground-truth lesion mask (H x W, 0/1), present for toy data only.
  std::vector<std::uint8_t> mask;
};

using Dataset = std::vector<ImageSample>;

struct ClassHistogram {
  std::array<std::size_t, kNumClasses> counts{};

  static ClassHistogram from_counts(const std::map<std::string, std::size_t>& by_name);

  std::size_t total() const;
  std::size_t max_count() const;
  // max / min over classes with a nonzero count; 1 for an empty histogram.
  double imbalance_ratio() const;
  std::size_t operator[](int label) const { return counts.at(static_cast<std::size_t>(label)); }
  bool operator==(const ClassHistogram&) const = default;
};

ClassHistogram class_histogram(const Dataset& dataset);

// Reads `metadata` (columns image_id, dx; others ignored) and decodes
// <dir>/<image_id>.{png,jpg,jpeg}, resized bilinearly to height x width.
Dataset ingest(const std::filesystem::path& dir, const std::filesystem::path& metadata, std::size_t height,
               std::size_t width);

// Per-class appearance used by the toy generator.
struct LesionStyle {
  std::array<float, 3> color;  // mean lesion RGB
  float size;                  // semi-major axis / image side
  float elongation;            // minor / major axis
  float border_softness;       // fraction of the radius blended into skin
  int texture;                 // 0 none, 1 speckle, 2 dots, 3 ring, 4 streaks, 5 mottle, 6 lobes
  float texture_strength;
  float color_jitter;
};

const std::array<LesionStyle, kNumClasses>& toy_lesion_styles();

struct ToyDatasetOptions {
  std::map<std::string, std::size_t> per_class;
  std::size_t height = 64;
  std::size_t width = 64;
  std::uint64_t seed = 0;
};

Dataset synth_toy_dataset(const ToyDatasetOptions& options);

struct SplitResult {
  Dataset train;
  Dataset val;
  std::vector<std::string> warnings;
};

// Stratified: per class round(count * val_fraction) samples go to val.
// Classes with fewer than 2 samples stay in train and raise a warning.
SplitResult split(const Dataset& dataset, double val_fraction, std::uint64_t seed);

void save_dataset(const Dataset& dataset, const std::filesystem::path& root);
Dataset load_dataset(const std::filesystem::path& root);

}  // namespace lesionaid
