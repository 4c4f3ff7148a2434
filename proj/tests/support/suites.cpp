// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "suites.hpp"

#include <algorithm>
#include <cmath>

#include "lesionaid/gradcam.hpp"
#include "lesionaid/gradcheck.hpp"

namespace lesionaid::testing {

namespace {

TensorD random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TensorD::from(std::move(shape), std::move(v), true);
}

// Values bounded away from zero, for ops with a kink there.
TensorD away_from_zero(Shape shape, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.5);
  return TensorD::from(std::move(shape), std::move(v), true);
}

// Contracts an op output with fixed random weights so every element gets a
// distinct upstream gradient.
TensorD contract(const TensorD& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(y.numel());
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return sum(mul(y, TensorD::from(y.shape(), std::move(w))));
}

}  // namespace

std::vector<std::pair<std::string, double>> op_gradcheck_errors(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<std::string, double>> out;
  auto check = [&](const std::string& name, const std::function<TensorD()>& f, std::vector<TensorD> params) {
    out.emplace_back(name, grad_check(f, std::move(params)));
  };

  {
    auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({3, 1}, rng);
    check("add", [=] { return contract(add(a, b), 1); }, {a, b});
    check("sub", [=] { return contract(sub(a, b), 2); }, {a, b});
    check("mul", [=] { return contract(mul(a, b), 3); }, {a, b});
    check("scale", [=] { return contract(scale(a, 1.7), 4); }, {a});
    check("add_scalar", [=] { return contract(add_scalar(a, -0.3), 5); }, {a});
  }
  {
    auto a = random_tensor({5, 4}, rng), b = random_tensor({4, 3}, rng), bias = random_tensor({3}, rng);
    check("matmul", [=] { return contract(matmul(a, b), 6); }, {a, b});
    auto x = random_tensor({2, 3, 4}, rng);
    check("linear", [=] { return contract(linear(x, b, bias), 7); }, {x, b, bias});
  }
  {
    auto a = random_tensor({3, 2, 4}, rng), b = random_tensor({3, 4, 5}, rng), c = random_tensor({3, 5, 4}, rng);
    check("bmm", [=] { return contract(bmm(a, b), 8); }, {a, b});
    check("bmm_transposed", [=] { return contract(bmm(a, c, true), 9); }, {a, c});
  }
  {
    auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 2, 4}, rng);
    check("reshape", [=] { return contract(reshape(a, {6, 4}), 10); }, {a});
    check("permute", [=] { return contract(permute(a, {2, 0, 1}), 11); }, {a});
    check("concat", [=] { return contract(concat<double>({a, b}, 1), 12); }, {a, b});
    check("slice", [=] { return contract(slice(a, 2, 1, 2), 13); }, {a});
  }
  {
    auto a = random_tensor({3, 5}, rng, -2.0, 2.0);
    check("softmax", [=] { return contract(softmax(a), 14); }, {a});
    check("softmax_axis0", [=] { return contract(softmax(a, 0), 15); }, {a});
    check("log_softmax", [=] { return contract(log_softmax(a), 16); }, {a});
    auto x = random_tensor({2, 3, 6}, rng, -2.0, 2.0), g = random_tensor({6}, rng, 0.5, 1.5),
         be = random_tensor({6}, rng);
    check("layer_norm", [=] { return contract(layer_norm(x, g, be), 17); }, {x, g, be});
    check("standardize", [=] { return contract(standardize(x), 18); }, {x});
  }
  {
    auto a = away_from_zero({4, 5}, rng);
    check("gelu", [=] { return contract(gelu(a), 19); }, {a});
    check("relu", [=] { return contract(relu(a), 20); }, {a});
    check("leaky_relu", [=] { return contract(leaky_relu(a), 21); }, {a});
    check("tanh", [=] { return contract(tanh(a), 22); }, {a});
    check("sigmoid", [=] { return contract(sigmoid(a), 23); }, {a});
  }
  {
    auto x = random_tensor({2, 2, 5, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    check("conv2d", [=] { return contract(conv2d(x, w, b, 1, 1), 24); }, {x, w, b});
    check("conv2d_stride2", [=] { return contract(conv2d(x, w, b, 2, 0), 25); }, {x, w, b});
    auto y = random_tensor({2, 2, 3, 3}, rng), wt = random_tensor({2, 3, 4, 4}, rng);
    check("conv_transpose2d", [=] { return contract(conv_transpose2d(y, wt, b, 2, 1), 26); }, {y, wt, b});
  }
  {
    auto x = random_tensor({3, 2, 3, 3}, rng, -2.0, 2.0), g = random_tensor({2}, rng, 0.5, 1.5),
         be = random_tensor({2}, rng);
    check("batch_norm2d", [=] {
      BatchNormStats<double> stats;
      return contract(batch_norm2d(x, g, be, stats, true), 27);
    }, {x, g, be});
  }
  {
    auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 5, 4}, rng);
    check("sq_dist", [=] { return contract(sq_dist(a, b), 28); }, {a, b});
    check("sum", [=] { return sum(mul(a, a)); }, {a});
    check("mean", [=] { return mean(mul(a, a)); }, {a});
  }
  {
    auto logits = random_tensor({4, 3}, rng, -2.0, 2.0);
    const std::vector<int> labels{0, 2, 1, 2};
    check("cross_entropy", [=] { return cross_entropy(logits, std::span<const int>(labels)); }, {logits});
    auto z = random_tensor({5}, rng, -3.0, 3.0);
    const std::vector<double> targets{1, 0, 1, 0.3, 0};
    check("bce_with_logits", [=] { return bce_with_logits(z, std::span<const double>(targets)); }, {z});
  }
  {
    auto a = random_tensor({4, 6}, rng);
    check("dropout", [=] {
      Rng r(17);
      return contract(dropout(a, 0.3, r), 29);
    }, {a});
  }
  {
    auto img = random_tensor({2, 3, 8, 8}, rng, 0.0, 1.0);
    check("disc_patchify", [=] { return contract(disc_patchify(img, 4, 1), 30); }, {img});
  }
  {
    Rng init(99);
    const AttentionShape dot{2, 3, AttentionKind::kDotProduct}, l2{2, 3, AttentionKind::kL2};
    auto x = random_tensor({2, 4, 5}, rng);
    auto pd = init_attention<double>(5, dot, init);
    check("multi_head_attention", [=] { return contract(multi_head_attention(x, pd, dot), 31); },
          {x, pd.wq, pd.wk, pd.wv, pd.wo});
    auto pl = init_attention<double>(5, l2, init);
    check("l2_attention", [=] { return contract(l2_attention(x, pl, l2), 32); }, {x, pl.wq, pl.wv, pl.wo});
    MlpParams<double> m{random_tensor({5, 7}, rng), random_tensor({7}, rng), random_tensor({7, 5}, rng),
                        random_tensor({5}, rng)};
    check("mlp_block", [=] { return contract(mlp_block(x, m), 33); }, {x, m.w1, m.b1, m.w2, m.b2});
  }
  return out;
}

double encoder_layer_gradcheck(std::uint64_t seed) {
  Rng rng(seed);
  const AttentionShape shape{2, 4, AttentionKind::kDotProduct};
  auto layer = init_encoder_layer<double>(8, 16, shape, rng);
  // Non-trivial affine parameters so their gradients are exercised.
  for (auto* t : {&layer.ln1_gamma, &layer.ln1_beta, &layer.ln2_gamma, &layer.ln2_beta, &layer.mlp.b1, &layer.mlp.b2}) {
    for (auto& v : t->mutable_data()) v += rng.uniform(-0.3, 0.3);
  }
  std::vector<double> xv(3 * 8);
  for (auto& v : xv) v = rng.normal();
  auto x = TensorD::from({1, 3, 8}, xv, true);
  const std::vector<int> label{1};
  std::vector<TensorD> params{x, layer.ln1_gamma, layer.ln1_beta, layer.attn.wq, layer.attn.wk, layer.attn.wv,
                              layer.attn.wo, layer.ln2_gamma, layer.ln2_beta, layer.mlp.w1, layer.mlp.b1,
                              layer.mlp.w2, layer.mlp.b2};
  return grad_check([=] { return contract(encoder_layer(x, layer, shape), 41); }, params);
}

GanConfig small_disc_config() {
  GanConfig cfg;
  cfg.image_size = 16;
  cfg.disc_patch = 8;
  cfg.overlap = 2;
  cfg.disc_dim = 12;
  cfg.disc_layers = 2;
  cfg.disc_heads = 2;
  cfg.disc_head_dim = 4;
  cfg.disc_mlp = 16;
  cfg.token_grid = 4;
  cfg.conditional = true;
  return cfg;
}

DiscGradcheck discriminator_gradcheck(std::uint64_t seed) {
  const GanConfig cfg = small_disc_config();
  Rng rng(seed);
  auto disc = DiscParams<double>::init(cfg, rng);
  for (auto& [name, t] : disc.named_parameters()) {
    // Layer-norm and bias parameters start at constants; perturb them.
    if (name.find("ln") != std::string::npos || name.ends_with(".b1") || name.ends_with(".b2") || name == "head.b") {
      for (auto& v : t.mutable_data()) v += rng.uniform(-0.3, 0.3);
    }
  }
  auto images = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  const std::vector<int> labels{4, 5};
  const std::vector<double> targets{1.0, 0.0};
  std::vector<TensorD> params{images};
  for (auto& [name, t] : disc.named_parameters()) params.push_back(t);
  const auto loss = [=] {
    auto logits =
        discriminate(disc, cfg, disc_patchify(images, cfg.disc_patch, cfg.overlap), std::span<const int>(labels));
    return bce_with_logits(logits, std::span<const double>(targets));
  };
  const auto r = grad_check_detailed(loss, params);
  DiscGradcheck out;
  out.max_rel_error = r.max_rel_error;
  out.worst_grad = params[r.worst_param].grad()[r.worst_index];
  out.directional = grad_check_directional(loss, params, 8, seed);
  return out;
}

double diagonal_fid(const std::vector<double>& mu_a, const std::vector<double>& var_a,
                    const std::vector<double>& mu_b, const std::vector<double>& var_b) {
  double d = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    d += (mu_a[i] - mu_b[i]) * (mu_a[i] - mu_b[i]);
    d += var_a[i] + var_b[i] - 2.0 * std::sqrt(var_a[i] * var_b[i]);
  }
  return d;
}

double fid_diagonal_max_error(std::size_t instances, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0;
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t f = 1 + rng.below(8);
    FidStats a, b;
    a.mu.resize(f), b.mu.resize(f);
    a.sigma.assign(f * f, 0.0), b.sigma.assign(f * f, 0.0);
    std::vector<double> va(f), vb(f);
    for (std::size_t i = 0; i < f; ++i) {
      a.mu[i] = rng.uniform(-2, 2);
      b.mu[i] = rng.uniform(-2, 2);
      va[i] = rng.uniform(0.01, 3);
      vb[i] = rng.uniform(0.01, 3);
      a.sigma[i * f + i] = va[i];
      b.sigma[i * f + i] = vb[i];
    }
    worst = std::max(worst, std::abs(fid(a, b) - diagonal_fid(a.mu, va, b.mu, vb)));
  }
  return worst;
}

GradcamOracleErrors gradcam_bruteforce_error(std::uint64_t seed) {
  constexpr std::size_t kCells = 4, kDim = 3;
  Rng rng(seed);
  std::vector<double> act(kCells * kDim), w(kDim * 2), v(2);
  for (auto& x : act) x = rng.uniform(-1, 1);
  for (auto& x : w) x = rng.uniform(-1, 1);
  for (auto& x : v) x = rng.uniform(-1, 1);
  // Target score y(A) = v . tanh(mean_cells(A) W) + sum_i A_i0 A_i1.
  auto score = [&](const std::vector<double>& a) {
    double y = 0;
    for (std::size_t j = 0; j < 2; ++j) {
      double h = 0;
      for (std::size_t d = 0; d < kDim; ++d) {
        double m = 0;
        for (std::size_t i = 0; i < kCells; ++i) m += a[i * kDim + d];
        h += m / kCells * w[d * 2 + j];
      }
      y += v[j] * std::tanh(h);
    }
    for (std::size_t i = 0; i < kCells; ++i) y += a[i * kDim] * a[i * kDim + 1];
    return y;
  };

  // Gradients from the autodiff engine.
  auto at = TensorD::from({kCells, kDim}, act, true);
  auto m = scale(matmul(TensorD::from({1, kCells}, std::vector<double>(kCells, 1.0)), at), 1.0 / kCells);
  auto y = add(sum(mul(tanh(matmul(m, TensorD::from({kDim, 2}, w))), TensorD::from({1, 2}, v))),
               sum(mul(slice(at, 1, 0, 1), slice(at, 1, 1, 1))));
  y.backward();
  std::vector<double> grad(at.grad().begin(), at.grad().end());
  const Heatmap h = gradcam_from(act, grad, 2, 2, kDim);

  GradcamOracleErrors out;
  for (std::size_t k = 0; k < act.size(); ++k) {
    auto up = act, down = act;
    up[k] += 1e-6;
    down[k] -= 1e-6;
    out.gradient = std::max(out.gradient, std::abs((score(up) - score(down)) / 2e-6 - grad[k]));
  }

  // By hand from the same gradients: channel weights, ReLU, max-normalize.
  std::vector<double> alpha(kDim, 0.0), cam(kCells, 0.0);
  for (std::size_t d = 0; d < kDim; ++d) {
    for (std::size_t i = 0; i < kCells; ++i) alpha[d] += grad[i * kDim + d];
    alpha[d] /= kCells;
  }
  double peak = 0;
  for (std::size_t i = 0; i < kCells; ++i) {
    for (std::size_t d = 0; d < kDim; ++d) cam[i] += alpha[d] * act[i * kDim + d];
    cam[i] = std::max(0.0, cam[i]);
    peak = std::max(peak, cam[i]);
  }
  for (std::size_t i = 0; i < kCells; ++i) {
    out.cam = std::max(out.cam, std::abs(h.raw[i] - cam[i]));
    out.cam = std::max(out.cam, std::abs(h.values[i] - (peak > 0 ? cam[i] / peak : 0.0)));
  }
  return out;
}

double gradcam_head_rescale_error(std::uint64_t seed) {
  VitConfig cfg;
  cfg.image_height = cfg.image_width = 16;
  cfg.patch = 4;
  cfg.embed_dim = 16;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.head_dim = 8;
  cfg.mlp_hidden = 32;
  auto params = VitParams<float>::init(cfg, seed);
  Rng rng(seed + 1);
  Image img(16, 16, 3);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  double worst = 0;
  int live = 0;
  for (int target = 0; target < 3; ++target) {
    const Heatmap before = gradcam(params, img, target);
    auto scaled = params;
    scaled.head_w = TensorF::from(params.head_w.shape(), {params.head_w.data().begin(), params.head_w.data().end()}, true);
    scaled.head_b = TensorF::from(params.head_b.shape(), {params.head_b.data().begin(), params.head_b.data().end()}, true);
    for (auto& v : scaled.head_w.mutable_data()) v *= 3.0f;
    for (auto& v : scaled.head_b.mutable_data()) v *= 3.0f;
    const Heatmap after = gradcam(scaled, img, target);
    if (before.degenerate != after.degenerate) return 1.0;
    if (before.degenerate) continue;
    const double peak = 3.0 * *std::max_element(before.raw.begin(), before.raw.end());
    for (std::size_t i = 0; i < before.values.size(); ++i) {
      worst = std::max(worst, std::abs(before.values[i] - after.values[i]));
      worst = std::max(worst, std::abs(after.raw[i] - 3.0 * before.raw[i]) / peak);
    }
    ++live;
  }
  return live > 0 ? worst : 1.0;
}

}  // namespace lesionaid::testing
