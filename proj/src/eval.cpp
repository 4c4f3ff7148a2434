// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "lesionaid/csv.hpp"

namespace lesionaid {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kEigenTolerance = 1e-6;

Eigen::Map<const Matrix> as_matrix(const FidStats& s) {
  return Eigen::Map<const Matrix>(s.sigma.data(), static_cast<long>(s.dim()), static_cast<long>(s.dim()));
}

// Eigenvalues of a symmetric matrix, with small negatives clamped to zero.
// The tolerance is relative to the largest eigenvalue once that exceeds 1.
Eigen::SelfAdjointEigenSolver<Matrix> checked_eigen(const Matrix& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw NumericalError(std::string("eigendecomposition failed for ") + what);
  const auto& ev = es.eigenvalues();
  const double tol = kEigenTolerance * std::max(1.0, ev.size() ? ev.maxCoeff() : 0.0);
  if (ev.size() && ev.minCoeff() < -tol) {
    throw NumericalError(std::string(what) + " has eigenvalue " + std::to_string(ev.minCoeff()) +
                         " below the clamping tolerance");
  }
  return es;
}

Matrix psd_sqrt(const Matrix& m) {
  auto es = checked_eigen(m, "covariance");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

FidStats feature_stats(const std::vector<std::vector<double>>& features) {
  if (features.size() < 2) {
    throw StatisticsError("feature statistics need at least 2 images, got " + std::to_string(features.size()));
  }
  const std::size_t f = features[0].size();
  for (const auto& row : features) {
    if (row.size() != f) throw ShapeError("feature rows differ in length");
  }
  FidStats s;
  s.n = features.size();
  s.mu.assign(f, 0.0);
  for (const auto& row : features)
    for (std::size_t i = 0; i < f; ++i) s.mu[i] += row[i];
  for (auto& m : s.mu) m /= static_cast<double>(s.n);
  Matrix centered(static_cast<long>(s.n), static_cast<long>(f));
  for (std::size_t r = 0; r < s.n; ++r)
    for (std::size_t i = 0; i < f; ++i) centered(static_cast<long>(r), static_cast<long>(i)) = features[r][i] - s.mu[i];
  Matrix cov = centered.transpose() * centered / static_cast<double>(s.n - 1);
  cov = 0.5 * (cov + cov.transpose());
  s.sigma.assign(cov.data(), cov.data() + cov.size());
  return s;
}

double fid(const FidStats& a, const FidStats& b) {
  if (a.dim() != b.dim()) {
    throw ShapeError("FID feature dims differ: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  double mean_term = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) mean_term += (a.mu[i] - b.mu[i]) * (a.mu[i] - b.mu[i]);
  const Matrix sa = as_matrix(a), sb = as_matrix(b);
  // sqrt(Sa) Sb sqrt(Sa) is symmetric and shares the eigenvalues of Sa Sb.
  const Matrix ra = psd_sqrt(sa);
  Matrix prod = ra * sb * ra;
  prod = 0.5 * (prod + prod.transpose());
  const auto es = checked_eigen(prod, "covariance product");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = mean_term + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, value);
}

FidStats feature_stats(const std::vector<const Image*>& images, const FeatureExtractor& extractor) {
  if (images.size() < 2) {
    throw StatisticsError("feature statistics need at least 2 images, got " + std::to_string(images.size()));
  }
  return feature_stats(extractor.extract(images));
}

FeatureExtractor vit_extractor(const VitParams<float>& params) {
  FeatureExtractor e;
  e.name = "vit";
  e.dim = params.config.embed_dim;
  e.extract = [&params](const std::vector<const Image*>& images) {
    const auto& cfg = params.config;
    std::vector<Image> resized;
    std::vector<const Image*> ptrs;
    resized.reserve(images.size());
    for (const Image* img : images) {
      if (img->height != cfg.image_height || img->width != cfg.image_width) {
        resized.push_back(resize_bilinear(*img, cfg.image_height, cfg.image_width));
        ptrs.push_back(&resized.back());
      } else {
        ptrs.push_back(img);
      }
    }
    return vit_features(params, ptrs);
  };
  return e;
}

namespace {

// Block average when the side divides evenly, bilinear resampling otherwise.
std::vector<double> pooled(const Image& img, std::size_t pool) {
  if (img.height % pool != 0 || img.width % pool != 0) {
    const Image small = resize_bilinear(img, pool, pool);
    return {small.pixels.begin(), small.pixels.end()};
  }
  const std::size_t bh = img.height / pool, bw = img.width / pool, c = img.channels;
  std::vector<double> out(pool * pool * c, 0.0);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) out[((y / bh) * pool + x / bw) * c + ch] += img.at(y, x, ch);
  for (auto& v : out) v /= static_cast<double>(bh * bw);
  return out;
}

}  // namespace

FeatureExtractor pixel_pca_extractor(const std::vector<const Image*>& reference, std::size_t components,
                                     std::size_t pool) {
  if (reference.size() < 2) throw StatisticsError("PCA extractor needs at least 2 reference images");
  std::vector<std::vector<double>> rows;
  for (const Image* img : reference) rows.push_back(pooled(*img, pool));
  const FidStats ref = feature_stats(rows);
  const std::size_t f = ref.dim();
  const std::size_t k = std::min(components, f);
  Eigen::SelfAdjointEigenSolver<Matrix> es(as_matrix(ref));
  // Top-k eigenvectors, largest first, sign fixed by the largest-magnitude entry.
  auto basis = std::make_shared<Matrix>(static_cast<long>(f), static_cast<long>(k));
  for (std::size_t j = 0; j < k; ++j) {
    Eigen::VectorXd v = es.eigenvectors().col(static_cast<long>(f - 1 - j));
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis->col(static_cast<long>(j)) = v;
  }
  auto mean = std::make_shared<std::vector<double>>(ref.mu);
  FeatureExtractor e;
  e.name = "pixel_pca";
  e.dim = k;
  e.extract = [basis, mean, pool, k](const std::vector<const Image*>& images) {
    std::vector<std::vector<double>> out;
    for (const Image* img : images) {
      auto x = pooled(*img, pool);
      if (x.size() != mean->size()) throw ShapeError("image channels differ from the PCA reference");
      Eigen::VectorXd c(static_cast<long>(x.size()));
      for (std::size_t i = 0; i < x.size(); ++i) c(static_cast<long>(i)) = x[i] - (*mean)[i];
      const Eigen::VectorXd p = basis->transpose() * c;
      out.emplace_back(p.data(), p.data() + k);
    }
    return out;
  };
  return e;
}

void write_fid_csv(const std::filesystem::path& path, const FidRecord& r) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DatasetError("cannot write '" + path.string() + "'");
  os << "real_dir,fake_dir,extractor,F,fid\n";
  os << r.real_dir << ',' << r.fake_dir << ',' << r.extractor << ',' << r.dim << ',' << format_number(r.fid) << '\n';
}

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& row : counts)
    for (auto c : row) t += c;
  return t;
}

double ConfusionMatrix::accuracy() const {
  std::size_t diag = 0;
  for (std::size_t i = 0; i < kNumClasses; ++i) diag += counts[i][i];
  const std::size_t t = total();
  return t ? static_cast<double>(diag) / static_cast<double>(t) : 0.0;
}

double ConfusionMatrix::precision(int label) const {
  const auto c = static_cast<std::size_t>(label);
  std::size_t col = 0;
  for (std::size_t i = 0; i < kNumClasses; ++i) col += counts[i][c];
  return col ? static_cast<double>(counts[c][c]) / static_cast<double>(col) : std::numeric_limits<double>::quiet_NaN();
}

double ConfusionMatrix::recall(int label) const {
  const auto c = static_cast<std::size_t>(label);
  std::size_t row = 0;
  for (std::size_t j = 0; j < kNumClasses; ++j) row += counts[c][j];
  return row ? static_cast<double>(counts[c][c]) / static_cast<double>(row) : std::numeric_limits<double>::quiet_NaN();
}

double ConfusionMatrix::off_diagonal_fraction() const {
  const std::size_t t = total();
  return t ? 1.0 - accuracy() : 0.0;
}

ConfusionMatrix confusion_from(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) throw ShapeError("truth and prediction counts differ");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= static_cast<int>(kNumClasses) || predicted[i] < 0 ||
        predicted[i] >= static_cast<int>(kNumClasses)) {
      throw DatasetError("label outside the class set at index " + std::to_string(i));
    }
    ++cm.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return cm;
}

ConfusionMatrix confusion_matrix(const VitParams<float>& params, const Dataset& dataset) {
  if (dataset.empty()) throw DatasetError("confusion_matrix: empty dataset");
  std::vector<int> truth;
  for (const auto& s : dataset) truth.push_back(s.label);
  return confusion_from(truth, predict(params, dataset));
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DatasetError("cannot write '" + path.string() + "'");
  os << "true";
  for (auto n : kClassNames) os << ',' << n;
  os << ",precision,recall\n";
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    os << kClassNames[i];
    for (std::size_t j = 0; j < kNumClasses; ++j) os << ',' << cm.counts[i][j];
    const double p = cm.precision(static_cast<int>(i)), r = cm.recall(static_cast<int>(i));
    os << ',' << (std::isnan(p) ? std::string() : format_number(p)) << ','
       << (std::isnan(r) ? std::string() : format_number(r)) << '\n';
  }
}

}  // namespace lesionaid
