// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. All functions are instantiated for float
// and double. Shapes are row-major; image tensors use NCHW.

#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "lesionaid/rng.hpp"
#include "lesionaid/tensor.hpp"

namespace lesionaid {

// Elementwise with numpy-style broadcasting (shapes aligned on the right,
// each dimension equal or 1).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);

// a[m,k] . b[k,n]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// x[..., k] . w[k, n] (+ bias[n]); leading dims are flattened.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias = {});
// Batched product a[G,m,k] . b[G,k,n], or a . b^T when b is [G,n,k].
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T> Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length);

template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis = -1);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& x);

// Normalizes over the last axis; gamma/beta of shape [D].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));
// Same standardization without the affine part.
template <typename T> Tensor<T> standardize(const Tensor<T>& x, T eps = T(1e-5));

enum class Activation { kGelu, kRelu, kLeakyRelu, kTanh, kSigmoid };
Activation parse_activation(std::string_view name);

template <typename T> Tensor<T> activation(const Tensor<T>& x, Activation kind);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2));
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);

// x[B,C,H,W], w[F,C,k,k], bias[F] optional.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad);
// x[B,C,H,W], w[C,F,k,k]; output side (H-1)*stride - 2*pad + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                           std::size_t stride, std::size_t pad);

template <typename T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
};

// Per-channel normalization of x[B,C,H,W]. Training mode uses batch moments
// and updates the running statistics; inference mode uses the running ones.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormStats<T>& stats, bool training, T momentum = T(0.1), T eps = T(1e-5));

// Squared euclidean distances between rows: a[G,n,d], b[G,m,d] -> [G,n,m].
template <typename T> Tensor<T> sq_dist(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

// Mean cross entropy of logits[B,C] against integer labels.
template <typename T> Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);
// Mean binary cross entropy with logits; targets in [0,1], same size as logits.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> targets);

// Inverted dropout; identity when p == 0.
template <typename T> Tensor<T> dropout(const Tensor<T>& x, T p, Rng& rng);

}  // namespace lesionaid
