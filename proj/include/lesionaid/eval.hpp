// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frechet distance between feature populations, feature extractors, and
// classification confusion matrices.

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lesionaid/dataset.hpp"
#include "lesionaid/vit.hpp"

namespace lesionaid {

class StatisticsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FidStats {
  std::vector<double> mu;     // [F]
  std::vector<double> sigma;  // [F, F], row-major
  std::size_t n = 0;

  std::size_t dim() const { return mu.size(); }
};

// Sample mean and unbiased covariance of feature rows.
FidStats feature_stats(const std::vector<std::vector<double>>& features);

// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
double fid(const FidStats& a, const FidStats& b);

struct FeatureExtractor {
  std::string name;
  std::size_t dim = 0;
  std::function<std::vector<std::vector<double>>(const std::vector<const Image*>&)> extract;
};

FidStats feature_stats(const std::vector<const Image*>& images, const FeatureExtractor& extractor);

// Final-LN class-token embedding of a trained classifier. Images of another
// size are bilinearly resized to the classifier input first. Holds a
// reference to `params`.
FeatureExtractor vit_extractor(const VitParams<float>& params);

// Average-pools to pool x pool x C, then projects on the top principal
// components of `reference`.
FeatureExtractor pixel_pca_extractor(const std::vector<const Image*>& reference, std::size_t components = 32,
                                     std::size_t pool = 8);

struct FidRecord {
  std::string real_dir, fake_dir, extractor;
  std::size_t dim = 0;
  double fid = 0;
};

// real_dir,fake_dir,extractor,F,fid
void write_fid_csv(const std::filesystem::path& path, const FidRecord& record);

struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};  // [true][predicted]

  std::size_t total() const;
  double accuracy() const;
  // NaN when the class was never predicted / never present.
  double precision(int label) const;
  double recall(int label) const;
  double off_diagonal_fraction() const;
};

ConfusionMatrix confusion_from(const std::vector<int>& truth, const std::vector<int>& predicted);
ConfusionMatrix confusion_matrix(const VitParams<float>& params, const Dataset& dataset);
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);

}  // namespace lesionaid
