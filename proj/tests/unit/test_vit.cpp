// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "lesionaid/gradcheck.hpp"
#include "lesionaid/vit.hpp"
#include "support/suites.hpp"
#include "support/tempdir.hpp"

using namespace lesionaid;

namespace {

VitConfig tiny_config(std::size_t side = 16, std::size_t patch = 8) {
  VitConfig c;
  c.image_height = c.image_width = side;
  c.patch = patch;
  c.embed_dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.head_dim = 4;
  c.mlp_hidden = 16;
  return c;
}

Image random_image(std::size_t h, std::size_t w, Rng& rng) {
  Image img(h, w, 3);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

template <typename T>
void fill(Tensor<T>& t, T v) {
  for (auto& x : t.mutable_data()) x = v;
}

template <typename T>
void randomize(Tensor<T>& t, Rng& rng, double scale = 0.5) {
  for (auto& x : t.mutable_data()) x = static_cast<T>(rng.uniform(-scale, scale));
}

}  // namespace

TEST_SUITE("vit") {

TEST_CASE("patch count law") {
  Rng rng(1);
  const auto rows = patchify(Image(64, 64, 3), 8);
  CHECK(rows.size() == 64 * 192);
  for (std::size_t h : {16, 24, 32, 48}) {
    for (std::size_t w : {16, 32, 40}) {
      for (std::size_t p : {4, 8}) {
        if (h % p || w % p) continue;
        const auto t = patchify_batch<float>({&(const Image&)random_image(h, w, rng)}, p);
        CHECK(t.dim(1) == h * w / (p * p));
        CHECK(t.dim(2) == p * p * 3);
      }
    }
  }
  // Source frames are not patch-aligned and must be resized first.
  CHECK_THROWS_AS(patchify(Image(450, 600, 3), 8), ShapeError);
  CHECK_THROWS_AS(patchify(Image(64, 60, 3), 8), ShapeError);
}

TEST_CASE("patch rows follow raster order") {
  Image img(4, 4, 1);
  for (std::size_t i = 0; i < 16; ++i) img.pixels[i] = static_cast<float>(i);
  const auto rows = patchify(img, 2);
  const std::vector<float> expected{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15};
  CHECK(rows == expected);
  const auto flat = patchify(Image(8, 8, 3, 0.3f), 4);
  for (std::size_t r = 1; r < 4; ++r) {
    CHECK(std::equal(flat.begin(), flat.begin() + 48, flat.begin() + static_cast<long>(r * 48)));
  }
}

TEST_CASE("embedding examples") {
  auto p = VitParams<double>::init(tiny_config(), 3);
  fill(p.patch_proj, 0.0);
  fill(p.pos_embed, 0.0);
  Rng rng(2);
  const Image img = random_image(16, 16, rng);
  auto z = embed(patchify_batch<double>({&img}, 8), p);
  REQUIRE(z.shape() == Shape{1, 5, 8});
  for (std::size_t d = 0; d < 8; ++d) CHECK(z.data()[d] == p.class_token.data()[d]);
  for (std::size_t i = 8; i < 40; ++i) CHECK(z.data()[i] == 0.0);
}

TEST_CASE("sequence length is N + 1") {
  for (std::size_t side : {16, 24, 32}) {
    auto cfg = tiny_config(side, 8);
    CHECK(cfg.tokens() == side * side / 64 + 1);
    auto p = VitParams<float>::init(cfg, 1);
    CHECK(p.pos_embed.dim(0) == cfg.tokens());
    Rng rng(side);
    const Image img = random_image(side, side, rng);
    CHECK(embed(patchify_batch<float>({&img}, 8), p).dim(1) == cfg.tokens());
  }
}

TEST_CASE("swapping patches changes the embedding") {
  auto p = VitParams<double>::init(tiny_config(), 4);
  Rng rng(5);
  Image img = random_image(16, 16, rng);
  auto patches = patchify_batch<double>({&img}, 8);
  std::vector<double> swapped(patches.data().begin(), patches.data().end());
  std::swap_ranges(swapped.begin(), swapped.begin() + 192, swapped.begin() + 192);
  auto a = embed(patches, p), b = embed(TensorD::from(patches.shape(), swapped), p);
  double diff = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff += std::abs(a.data()[i] - b.data()[i]);
  CHECK(diff > 1e-3);
}

TEST_CASE("attention examples") {
  Rng rng(6);
  const AttentionShape shape{2, 3, AttentionKind::kDotProduct};
  auto attn = init_attention<double>(5, shape, rng);
  std::vector<double> xv(2 * 4 * 5);
  for (auto& v : xv) v = rng.normal();
  auto x = TensorD::from({2, 4, 5}, xv);

  SUBCASE("zero values give zero output") {
    auto a = attn;
    a.wv = TensorD::zeros(attn.wv.shape());
    const auto out = multi_head_attention(x, a, shape);
    for (double v : out.data()) CHECK(v == 0.0);
  }
  SUBCASE("rows are distributions") {
    TensorD w;
    multi_head_attention(x, attn, shape, &w);
    REQUIRE(w.shape() == Shape{4, 4, 4});
    for (std::size_t r = 0; r < 16; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(w.data()[r * 4 + c] >= 0.0);
        s += w.data()[r * 4 + c];
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
  SUBCASE("single token, single head returns its projected value") {
    const AttentionShape one{1, 3, AttentionKind::kDotProduct};
    auto a = init_attention<double>(5, one, rng);
    auto t = slice(slice(x, 0, 0, 1), 1, 0, 1);
    auto out = multi_head_attention(t, a, one);
    auto expected = matmul(matmul(reshape(t, {1, 5}), a.wv), a.wo);
    for (std::size_t i = 0; i < 5; ++i) CHECK(out.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("encoder layer with zeroed output projections is the identity") {
  Rng rng(7);
  const AttentionShape shape{2, 4, AttentionKind::kDotProduct};
  auto layer = init_encoder_layer<double>(8, 16, shape, rng);
  fill(layer.attn.wo, 0.0);
  fill(layer.mlp.w2, 0.0);
  std::vector<double> zv(3 * 8);
  for (auto& v : zv) v = rng.normal();
  auto z = TensorD::from({1, 3, 8}, zv);
  auto out = encoder_layer(z, layer, shape);
  CHECK(out.shape() == z.shape());
  for (std::size_t i = 0; i < zv.size(); ++i) CHECK(out.data()[i] == zv[i]);
}

TEST_CASE("whole encoder is the identity with zeroed output projections") {
  auto p = VitParams<double>::init(tiny_config(), 8);
  for (auto& l : p.layers) {
    fill(l.attn.wo, 0.0);
    fill(l.mlp.w2, 0.0);
  }
  Rng rng(9);
  const Image img = random_image(16, 16, rng);
  auto patches = patchify_batch<double>({&img}, 8);
  VitTrace<double> trace;
  vit_forward(p, patches, &trace);
  auto z0 = embed(patches, p);
  REQUIRE(trace.layer_outputs.size() == 2);
  for (const auto& out : trace.layer_outputs) {
    for (std::size_t i = 0; i < z0.numel(); ++i) CHECK(out.data()[i] == z0.data()[i]);
  }
}

TEST_CASE("encoder layer gradient check at D = 8 over 3 tokens") {
  CHECK(testing::encoder_layer_gradcheck() < 1e-5);
}

TEST_CASE("end-to-end classifier gradient check") {
  auto p = VitParams<double>::init(tiny_config(), 10);
  Rng rng(11);
  for (auto& l : p.layers) {
    randomize(l.ln1_gamma, rng);
    randomize(l.ln2_beta, rng);
  }
  randomize(p.head_b, rng);
  std::vector<double> xv(2 * 4 * 192);
  for (auto& v : xv) v = rng.uniform();
  auto x = TensorD::from({2, 4, 192}, xv);
  const std::vector<int> labels{3, 6};
  const auto loss = [=] { return cross_entropy(vit_forward(p, x), std::span<const int>(labels)); };
  CHECK(grad_check_directional(loss, p.parameters(), 8, 21) < 1e-5);
}

TEST_CASE("attention rows are distributions in every layer and head") {
  VitConfig cfg;
  auto p = VitParams<float>::init(cfg, 12);
  Rng rng(13);
  const Image a = random_image(64, 64, rng), b = random_image(64, 64, rng);
  VitTrace<float> trace;
  vit_forward(p, patchify_batch<float>({&a, &b}, 8), &trace);
  REQUIRE(trace.attention.size() == cfg.layers);
  const std::size_t t = cfg.tokens();
  for (const auto& w : trace.attention) {
    REQUIRE(w.shape() == Shape{2 * cfg.heads, t, t});
    for (std::size_t r = 0; r < 2 * cfg.heads * t; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < t; ++c) s += w.data()[r * t + c];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("patch permutation is equivariant without positional embeddings") {
  auto p = VitParams<double>::init(tiny_config(), 14);
  fill(p.pos_embed, 0.0);
  Rng rng(15);
  const Image img = random_image(16, 16, rng);
  auto patches = patchify_batch<double>({&img}, 8);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<double> pv(patches.numel());
  for (std::size_t i = 0; i < 4; ++i) {
    std::copy_n(patches.data().begin() + static_cast<long>(perm[i] * 192), 192, pv.begin() + static_cast<long>(i * 192));
  }
  VitTrace<double> ta, tb;
  auto la = vit_forward(p, patches, &ta);
  auto lb = vit_forward(p, TensorD::from(patches.shape(), pv), &tb);
  for (std::size_t i = 0; i < la.numel(); ++i) CHECK(la.data()[i] == doctest::Approx(lb.data()[i]).epsilon(1e-12));
  const auto& oa = ta.layer_outputs.back();
  const auto& ob = tb.layer_outputs.back();
  const std::size_t d = 8;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      CHECK(ob.data()[(1 + i) * d + k] == doctest::Approx(oa.data()[(1 + perm[i]) * d + k]).epsilon(1e-12));
    }
}

TEST_CASE("classification probabilities") {
  VitConfig cfg = tiny_config();
  auto p = VitParams<float>::init(cfg, 16);
  Rng rng(17);
  for (int i = 0; i < 10; ++i) {
    const auto probs = classify(p, random_image(16, 16, rng));
    REQUIRE(probs.size() == kNumClasses);
    double s = 0;
    for (double v : probs) s += v;
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  fill(p.head_w, 0.0f);
  fill(p.head_b, 0.0f);
  for (double v : classify(p, random_image(16, 16, rng))) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-6));
  CHECK_THROWS_AS(classify(p, Image(32, 32, 3)), ShapeError);
}

TEST_CASE("config validation") {
  VitConfig c = tiny_config();
  c.patch = 5;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = tiny_config();
  c.num_classes = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  CHECK(VitConfig::from_array(c.to_array()).to_array() == c.to_array());
}

TEST_CASE("checkpoint round-trip keeps predictions") {
  auto p = VitParams<float>::init(tiny_config(), 18);
  Checkpoint ck;
  save_vit(ck, p);
  CHECK(ck.contains("vit.embed.E"));
  CHECK(ck.contains("vit.layer0.wq"));
  const auto back = load_vit(Checkpoint::deserialize(ck.serialize()));
  Rng rng(19);
  const Image img = random_image(16, 16, rng);
  CHECK(classify(back, img) == classify(p, img));
}

TEST_CASE("one epoch on seven samples emits a one-row report") {
  ToyDatasetOptions o;
  for (auto n : kClassNames) o.per_class[std::string(n)] = 1;
  o.height = o.width = 16;
  const Dataset d = synth_toy_dataset(o);
  VitTrainOptions opt;
  opt.epochs = 1;
  std::size_t calls = 0;
  opt.on_epoch = [&](const EpochStats&) { ++calls; };
  auto [params, report] = train_classifier(d, {}, tiny_config(), opt);
  REQUIRE(report.epochs.size() == 1);
  CHECK(calls == 1);
  CHECK(report.epochs[0].epoch == 1);
  CHECK_FALSE(report.epochs[0].has_val);
  CHECK((report.epochs[0].train_acc >= 0 && report.epochs[0].train_acc <= 1));
}

TEST_CASE("training is deterministic and reports round-trip") {
  ToyDatasetOptions o;
  o.per_class = {{"nv", 6}, {"mel", 6}};
  o.height = o.width = 16;
  const Dataset d = synth_toy_dataset(o);
  const auto s = split(d, 0.34, 0);
  VitTrainOptions opt;
  opt.epochs = 2;
  opt.batch_size = 4;
  auto [pa, ra] = train_classifier(s.train, s.val, tiny_config(), opt);
  auto [pb, rb] = train_classifier(s.train, s.val, tiny_config(), opt);
  Checkpoint ca, cb;
  save_vit(ca, pa);
  save_vit(cb, pb);
  CHECK(ca.serialize() == cb.serialize());
  TempDir tmp;
  ra.write_csv(tmp.path() / "r.csv");
  const auto back = TrainReport::read_csv(tmp.path() / "r.csv");
  REQUIRE(back.epochs.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.epochs[i].epoch == i + 1);
    CHECK(back.epochs[i].train_loss == ra.epochs[i].train_loss);
    CHECK(back.epochs[i].val_acc == ra.epochs[i].val_acc);
    CHECK(back.epochs[i].has_val);
  }
}

TEST_CASE("divergence aborts with the last good parameters") {
  ToyDatasetOptions o;
  o.per_class = {{"nv", 4}, {"mel", 4}};
  o.height = o.width = 16;
  const Dataset d = synth_toy_dataset(o);
  TempDir tmp;
  VitTrainOptions opt;
  opt.epochs = 3;
  opt.adam.lr = 1e38;
  opt.abort_checkpoint = tmp.path() / "abort.bin";
  CHECK_THROWS_AS(train_classifier(d, {}, tiny_config(), opt), TrainingDiverged);
  REQUIRE(std::filesystem::exists(tmp.path() / "abort.bin"));
  const auto saved = load_vit(Checkpoint::load(tmp.path() / "abort.bin"));
  for (const auto& [name, t] : saved.named_parameters())
    for (float v : t.data()) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(train_classifier({}, {}, tiny_config(), {}), DatasetError);
}

}  // TEST_SUITE
