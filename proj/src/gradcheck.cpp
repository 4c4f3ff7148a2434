// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lesionaid/rng.hpp"

namespace lesionaid {

GradCheckResult grad_check_detailed(const std::function<TensorD()>& f, std::vector<TensorD> params, double h) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double saved = w[k];
      w[k] = saved + h;
      const double up = f().item();
      w[k] = saved - h;
      const double down = f().item();
      w[k] = saved;
      const double cd = (up - down) / (2.0 * h);
      const double a = analytic[i][k];
      const double err = std::abs(a - cd) / (std::abs(a) + std::abs(cd) + 1e-12);
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = i;
        result.worst_index = k;
      }
    }
  }
  return result;
}

double grad_check_directional(const std::function<TensorD()>& f, std::vector<TensorD> params,
                              std::size_t directions, std::uint64_t seed, double h) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
  }

  Rng rng(seed);
  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t d = 0; d < directions; ++d) {
    std::vector<std::vector<double>> v(params.size());
    double norm2 = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      v[i].resize(params[i].numel());
      for (auto& x : v[i]) {
        x = rng.normal();
        norm2 += x * x;
      }
    }
    const double inv = 1.0 / std::sqrt(norm2);
    double a = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (std::size_t k = 0; k < v[i].size(); ++k) {
        v[i][k] *= inv;
        a += analytic[i][k] * v[i][k];
      }
    }
    std::vector<std::vector<double>> saved;
    for (auto& p : params) saved.emplace_back(p.data().begin(), p.data().end());
    auto shift = [&](double s) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].mutable_data();
        for (std::size_t k = 0; k < w.size(); ++k) w[k] = saved[i][k] + s * v[i][k];
      }
    };
    shift(h);
    const double up = f().item();
    shift(-h);
    const double down = f().item();
    shift(0.0);
    const double cd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(a - cd) / (std::abs(a) + std::abs(cd) + 1e-12));
  }
  return worst;
}

}  // namespace lesionaid
