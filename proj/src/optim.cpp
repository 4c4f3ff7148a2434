// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/optim.hpp"

#include <cmath>
#include <string>

namespace lesionaid {

template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const std::vector<T>> grads, AdamState<T>& state) {
  if (grads.size() != params.size()) {
    throw ShapeError("adam_step got " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].empty() && grads[i].size() != params[i].numel()) {
      throw ShapeError("adam_step gradient " + std::to_string(i) + " has " + std::to_string(grads[i].size()) +
                       " values for parameter of shape " + to_string(params[i].shape()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    state.first_moment.assign(params.size(), {});
    state.second_moment.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(params[i].numel(), T(0));
      state.second_moment[i].assign(params[i].numel(), T(0));
    }
  }
  ++state.step;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const T c1 = static_cast<T>(1.0 - std::pow(o.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(o.beta2, t));
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T lr = static_cast<T>(o.lr), eps = static_cast<T>(o.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != params[i].numel()) throw ShapeError("adam moment buffer does not match parameter");
    auto w = params[i].mutable_data();
    const auto& g = grads[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const T gk = g.empty() ? T(0) : g[k];
      m[k] = b1 * m[k] + (T(1) - b1) * gk;
      v[k] = b2 * v[k] + (T(1) - b2) * gk * gk;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamOptions options) : params_(std::move(params)) {
  state_.options = options;
}

template <typename T>
void Adam<T>::step() {
  std::vector<std::vector<T>> grads(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].has_grad()) grads[i].assign(params_[i].grad().begin(), params_[i].grad().end());
  }
  adam_step<T>(params_, grads, state_);
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template void adam_step<float>(std::span<Tensor<float>>, std::span<const std::vector<float>>, AdamState<float>&);
template void adam_step<double>(std::span<Tensor<double>>, std::span<const std::vector<double>>,
                                AdamState<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace lesionaid
