// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm transformer encoder pieces shared by the classifier, the
// discriminator and the generator trunk.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lesionaid/ops.hpp"
#include "lesionaid/rng.hpp"

namespace lesionaid {

enum class AttentionKind {
  kDotProduct,  // softmax(Q K^T / sqrt(d_k)) V
  kL2,          // softmax(-||q_i - k_j||^2 / sqrt(d_k)) V with tied query/key projection
};

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
struct AttentionParams {
  Tensor<T> wq;  // [D, h*d_k]
  Tensor<T> wk;  // [D, h*d_k]; shares wq's node for kL2
  Tensor<T> wv;  // [D, h*d_k]
  Tensor<T> wo;  // [h*d_k, D]
};

template <typename T>
struct MlpParams {
  Tensor<T> w1, b1, w2, b2;  // [D, hidden], [hidden], [hidden, D], [D]
};

template <typename T>
struct EncoderLayerParams {
  Tensor<T> ln1_gamma, ln1_beta;
  AttentionParams<T> attn;
  Tensor<T> ln2_gamma, ln2_beta;
  MlpParams<T> mlp;
};

struct AttentionShape {
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  AttentionKind kind = AttentionKind::kDotProduct;
};

// Xavier-normal weight, as used for every projection here.
template <typename T>
Tensor<T> init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng, double gain = 1.0);
template <typename T>
Tensor<T> init_normal(Shape shape, double stddev, Rng& rng);

template <typename T>
AttentionParams<T> init_attention(std::size_t dim, const AttentionShape& shape, Rng& rng);
template <typename T>
EncoderLayerParams<T> init_encoder_layer(std::size_t dim, std::size_t mlp_hidden, const AttentionShape& shape,
                                         Rng& rng);

template <typename T>
void append_named(NamedTensors<T>& out, const std::string& prefix, const EncoderLayerParams<T>& layer,
                  AttentionKind kind);

// Multi-head attention over x[B, T, D]. Writes the attention weights
// [B*h, T, T] to *weights when given.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionParams<T>& p, const AttentionShape& shape,
                               Tensor<T>* weights = nullptr);

// fc2(gelu(fc1(x))), with optional dropout on the hidden layer.
template <typename T>
Tensor<T> mlp_block(const Tensor<T>& x, const MlpParams<T>& p, T dropout_rate = T(0), Rng* rng = nullptr);

// What an encoder layer can report besides its output.
template <typename T>
struct LayerTrace {
  Tensor<T> attention;  // [B*h, T, T]
  Tensor<T> normed;     // LN1 output, the input seen by attention
};

// z' = MSA(LN(z)) + z ; out = MLP(LN(z')) + z'
template <typename T>
Tensor<T> encoder_layer(const Tensor<T>& z, const EncoderLayerParams<T>& p, const AttentionShape& shape,
                        LayerTrace<T>* trace = nullptr, T dropout_rate = T(0), Rng* rng = nullptr);

}  // namespace lesionaid
