// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/transformer.hpp"

#include <cmath>

namespace lesionaid {

template <typename T>
Tensor<T> init_normal(Shape shape, double stddev, Rng& rng) {
  Buffer<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
  return Tensor<T>::from_buffer(std::move(shape), std::move(v), true);
}

template <typename T>
Tensor<T> init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng, double gain) {
  const double stddev = gain * std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  return init_normal<T>({fan_in, fan_out}, stddev, rng);
}

template <typename T>
AttentionParams<T> init_attention(std::size_t dim, const AttentionShape& shape, Rng& rng) {
  const std::size_t inner = shape.heads * shape.head_dim;
  AttentionParams<T> p;
  p.wq = init_weight<T>(dim, inner, rng);
  p.wk = shape.kind == AttentionKind::kL2 ? p.wq : init_weight<T>(dim, inner, rng);
  p.wv = init_weight<T>(dim, inner, rng);
  p.wo = init_weight<T>(inner, dim, rng);
  return p;
}

template <typename T>
EncoderLayerParams<T> init_encoder_layer(std::size_t dim, std::size_t mlp_hidden, const AttentionShape& shape,
                                         Rng& rng) {
  EncoderLayerParams<T> p;
  p.ln1_gamma = Tensor<T>::full({dim}, T(1), true);
  p.ln1_beta = Tensor<T>::zeros({dim}, true);
  p.attn = init_attention<T>(dim, shape, rng);
  p.ln2_gamma = Tensor<T>::full({dim}, T(1), true);
  p.ln2_beta = Tensor<T>::zeros({dim}, true);
  p.mlp.w1 = init_weight<T>(dim, mlp_hidden, rng);
  p.mlp.b1 = Tensor<T>::zeros({mlp_hidden}, true);
  p.mlp.w2 = init_weight<T>(mlp_hidden, dim, rng);
  p.mlp.b2 = Tensor<T>::zeros({dim}, true);
  return p;
}

template <typename T>
void append_named(NamedTensors<T>& out, const std::string& prefix, const EncoderLayerParams<T>& layer,
                  AttentionKind kind) {
  out.emplace_back(prefix + ".ln1.gamma", layer.ln1_gamma);
  out.emplace_back(prefix + ".ln1.beta", layer.ln1_beta);
  if (kind == AttentionKind::kL2) {
    out.emplace_back(prefix + ".wqk", layer.attn.wq);
  } else {
    out.emplace_back(prefix + ".wq", layer.attn.wq);
    out.emplace_back(prefix + ".wk", layer.attn.wk);
  }
  out.emplace_back(prefix + ".wv", layer.attn.wv);
  out.emplace_back(prefix + ".wo", layer.attn.wo);
  out.emplace_back(prefix + ".ln2.gamma", layer.ln2_gamma);
  out.emplace_back(prefix + ".ln2.beta", layer.ln2_beta);
  out.emplace_back(prefix + ".mlp.w1", layer.mlp.w1);
  out.emplace_back(prefix + ".mlp.b1", layer.mlp.b1);
  out.emplace_back(prefix + ".mlp.w2", layer.mlp.w2);
  out.emplace_back(prefix + ".mlp.b2", layer.mlp.b2);
}

namespace {

// [B, T, h*dk] -> [B*h, T, dk]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads, std::size_t head_dim) {
  const std::size_t b = x.dim(0), t = x.dim(1);
  auto y = permute(reshape(x, {b, t, heads, head_dim}), {0, 2, 1, 3});
  return reshape(y, {b * heads, t, head_dim});
}

// [B*h, T, dk] -> [B, T, h*dk]
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::size_t batch, std::size_t heads) {
  const std::size_t t = x.dim(1), dk = x.dim(2);
  auto y = permute(reshape(x, {batch, heads, t, dk}), {0, 2, 1, 3});
  return reshape(y, {batch, t, heads * dk});
}

}  // namespace

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionParams<T>& p, const AttentionShape& shape,
                               Tensor<T>* weights) {
  if (x.rank() != 3) throw ShapeError("attention expects [B, T, D], got " + to_string(x.shape()));
  const std::size_t batch = x.dim(0);
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(shape.head_dim));
  auto q = split_heads(linear(x, p.wq), shape.heads, shape.head_dim);
  auto v = split_heads(linear(x, p.wv), shape.heads, shape.head_dim);
  Tensor<T> logits;
  if (shape.kind == AttentionKind::kL2) {
    // Tied projection: keys are the queries.
    auto k = p.wk.node() == p.wq.node() ? q : split_heads(linear(x, p.wk), shape.heads, shape.head_dim);
    logits = scale(sq_dist(q, k), -inv_scale);
  } else {
    auto k = split_heads(linear(x, p.wk), shape.heads, shape.head_dim);
    logits = scale(bmm(q, k, true), inv_scale);
  }
  auto attn = softmax(logits, -1);
  if (weights) *weights = attn;
  auto ctx = merge_heads(bmm(attn, v), batch, shape.heads);
  return linear(ctx, p.wo);
}

template <typename T>
Tensor<T> mlp_block(const Tensor<T>& x, const MlpParams<T>& p, T dropout_rate, Rng* rng) {
  auto h = gelu(linear(x, p.w1, p.b1));
  if (dropout_rate > T(0) && rng) h = dropout(h, dropout_rate, *rng);
  return linear(h, p.w2, p.b2);
}

template <typename T>
Tensor<T> encoder_layer(const Tensor<T>& z, const EncoderLayerParams<T>& p, const AttentionShape& shape,
                        LayerTrace<T>* trace, T dropout_rate, Rng* rng) {
  auto normed = layer_norm(z, p.ln1_gamma, p.ln1_beta);
  Tensor<T> weights;
  auto z_mid = add(multi_head_attention(normed, p.attn, shape, &weights), z);
  auto out = add(mlp_block(layer_norm(z_mid, p.ln2_gamma, p.ln2_beta), p.mlp, dropout_rate, rng), z_mid);
  if (trace) {
    trace->attention = weights;
    trace->normed = normed;
  }
  return out;
}

#define LESIONAID_INSTANTIATE_TRANSFORMER(T)                                                                   \
  template Tensor<T> init_normal<T>(Shape, double, Rng&);                                                      \
  template Tensor<T> init_weight<T>(std::size_t, std::size_t, Rng&, double);                                   \
  template AttentionParams<T> init_attention<T>(std::size_t, const AttentionShape&, Rng&);                     \
  template EncoderLayerParams<T> init_encoder_layer<T>(std::size_t, std::size_t, const AttentionShape&, Rng&); \
  template void append_named<T>(NamedTensors<T>&, const std::string&, const EncoderLayerParams<T>&,           \
                                AttentionKind);                                                                \
  template Tensor<T> multi_head_attention<T>(const Tensor<T>&, const AttentionParams<T>&,                      \
                                             const AttentionShape&, Tensor<T>*);                               \
  template Tensor<T> mlp_block<T>(const Tensor<T>&, const MlpParams<T>&, T, Rng*);                             \
  template Tensor<T> encoder_layer<T>(const Tensor<T>&, const EncoderLayerParams<T>&, const AttentionShape&,   \
                                      LayerTrace<T>*, T, Rng*);

LESIONAID_INSTANTIATE_TRANSFORMER(float)
LESIONAID_INSTANTIATE_TRANSFORMER(double)

}  // namespace lesionaid
