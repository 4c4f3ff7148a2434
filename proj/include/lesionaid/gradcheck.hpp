// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lesionaid/tensor.hpp"

namespace lesionaid {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients of the scalar `f` against central
// differences, element by element over every tensor in `params`:
//   |analytic - cd| / (|analytic| + |cd| + 1e-12)
// `f` must rebuild its graph from the current parameter values on each call.
GradCheckResult grad_check_detailed(const std::function<TensorD()>& f, std::vector<TensorD> params,
                                    double h = 1e-5);

inline double grad_check(const std::function<TensorD()>& f, std::vector<TensorD> params, double h = 1e-5) {
  return grad_check_detailed(f, std::move(params), h).max_rel_error;
}

// Same comparison along `directions` random unit directions v (normal draws
// scaled to norm 1) over all of `params` at once: analytic grad . v against
// (f(x + h v) - f(x - h v)) / 2h. Returns the largest relative error.
// Suited to whole models, where single components can sit below the
// roundoff floor of the differences.
double grad_check_directional(const std::function<TensorD()>& f, std::vector<TensorD> params,
                              std::size_t directions, std::uint64_t seed, double h = 1e-5);

}  // namespace lesionaid
