// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lesionaid/tensor.hpp"

namespace lesionaid {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Defaults used by the classifier and by both adversarial players.
inline constexpr AdamOptions kClassifierAdam{1e-3, 0.9, 0.999, 1e-8};
inline constexpr AdamOptions kGanAdam{2e-4, 0.5, 0.999, 1e-8};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::uint64_t step = 0;
  AdamOptions options;
};

// One bias-corrected Adam update of `params` using `grads` (one buffer per
// parameter; an empty buffer means zero gradient). Moments are allocated on
// first use.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const std::vector<T>> grads, AdamState<T>& state);

// Owns an AdamState over a fixed parameter list and reads gradients straight
// from the tensors.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamOptions options);

  void step();
  void zero_grad();

  const AdamState<T>& state() const { return state_; }
  AdamState<T>& state() { return state_; }
  std::vector<Tensor<T>>& params() { return params_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamState<T> state_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace lesionaid
