// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Transformer GAN. The discriminator is a ViT over overlapping patches with
// L2-distance attention; the generator runs a learned token grid through
// transformer blocks whose layer norms are modulated by the latent vector,
// then maps tokens to pixels with residual and transposed-conv stages.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "lesionaid/checkpoint.hpp"
#include "lesionaid/dataset.hpp"
#include "lesionaid/optim.hpp"
#include "lesionaid/transformer.hpp"

namespace lesionaid {

struct GanConfig {
  std::size_t image_size = 64;
  std::size_t channels = 3;
  std::size_t latent_dim = 32;
  bool conditional = true;
  std::size_t num_classes = kNumClasses;

  // Discriminator.
  std::size_t disc_patch = 8;  // M
  std::size_t overlap = 2;     // o
  std::size_t disc_dim = 64;
  std::size_t disc_layers = 3;
  std::size_t disc_heads = 4;
  std::size_t disc_head_dim = 16;
  std::size_t disc_mlp = 128;

  // Generator.
  std::size_t token_grid = 8;
  std::size_t gen_dim = 64;
  std::size_t gen_layers = 2;
  std::size_t gen_heads = 4;
  std::size_t gen_head_dim = 16;
  std::size_t gen_mlp = 128;
  // Output channels of each x2 upsampling stage; empty means halve gen_dim
  // per stage (floor 8). Stage count is log2(image_size / token_grid).
  std::vector<std::size_t> stage_channels;

  void validate() const;
  std::size_t upsample_stages() const;
  std::vector<std::size_t> resolved_stage_channels() const;
  std::size_t disc_tokens() const { return (image_size / disc_patch) * (image_size / disc_patch); }
  std::size_t disc_patch_dim() const {
    const std::size_t s = disc_patch + 2 * overlap;
    return s * s * channels;
  }

  std::vector<double> to_array() const;
  static GanConfig from_array(const std::vector<double>& v);
};

// Patches of side M+2o centred on the M-grid cells, reflect-padded at the
// border; same row layout as patchify, which it equals for o = 0.
std::vector<float> disc_patchify_overlap(const Image& image, std::size_t patch, std::size_t overlap);

// Differentiable version over images[B, C, H, W]: [B, N, (M+2o)^2 * C].
template <typename T>
Tensor<T> disc_patchify(const Tensor<T>& images, std::size_t patch, std::size_t overlap);

// Multi-head L2 attention over x[B, T, D]; p.wk must share p.wq's node.
template <typename T>
Tensor<T> l2_attention(const Tensor<T>& x, const AttentionParams<T>& p, const AttentionShape& shape,
                       Tensor<T>* weights = nullptr);

template <typename T>
struct DiscParams {
  Tensor<T> patch_proj, class_token, pos_embed;
  std::vector<EncoderLayerParams<T>> layers;
  Tensor<T> final_ln_gamma, final_ln_beta;
  Tensor<T> head_w, head_b;  // [D, 1], [1]
  Tensor<T> class_embed;     // [classes, D], projection term; conditional only

  static DiscParams init(const GanConfig& config, Rng& rng);
  NamedTensors<T> named_parameters() const;
};

// Layer norm whose scale and shift are affine in the latent vector.
template <typename T>
struct ModulatedNorm {
  Tensor<T> a_gamma, b_gamma;  // [latent, D], [D]
  Tensor<T> a_beta, b_beta;
};

template <typename T>
struct GenBlock {
  ModulatedNorm<T> ln1, ln2;
  AttentionParams<T> attn;
  MlpParams<T> mlp;
};

template <typename T>
struct ConvBn {
  Tensor<T> weight, bias, gamma, beta;
  BatchNormStats<T> stats;
};

template <typename T>
struct GenParams {
  Tensor<T> tokens;       // [grid*grid, D]
  Tensor<T> class_embed;  // [classes, latent]; conditional only
  std::vector<GenBlock<T>> blocks;
  ModulatedNorm<T> final_ln;
  ConvBn<T> res1, res2;
  std::vector<ConvBn<T>> up;
  Tensor<T> out_w, out_b;

  static GenParams init(const GanConfig& config, Rng& rng);
  NamedTensors<T> named_parameters() const;
  std::vector<std::pair<std::string, BatchNormStats<T>*>> named_buffers();
};

// Real/fake logits [B] from disc_patchify output. `labels` is required when
// the config is conditional.
template <typename T>
Tensor<T> discriminate(const DiscParams<T>& params, const GanConfig& config, const Tensor<T>& patches,
                       std::span<const int> labels = {});

// Images as NCHW in [0, 1] from z[B, latent]. Batch norm uses batch
// statistics in training mode and the running ones otherwise.
template <typename T>
Tensor<T> generate(GenParams<T>& params, const GanConfig& config, const Tensor<T>& z, std::span<const int> labels,
                   bool training);

std::vector<Image> tensor_to_images(const Tensor<float>& nchw);
Tensor<float> images_to_tensor(const std::vector<const Image*>& images);

struct GanStepResult {
  double d_loss = 0;
  double g_loss = 0;
  double d_accuracy = 0;  // on this step's real+fake batch, before the update
};

struct GanState {
  GanConfig config;
  GenParams<float> gen;
  DiscParams<float> disc;
  std::optional<Adam<float>> gen_opt, disc_opt;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  Tensor<float> eval_noise;  // fixed [n, latent] for comparable snapshots
  std::vector<int> eval_labels;

  static GanState init(const GanConfig& config, std::uint64_t seed, AdamOptions adam = kGanAdam);
  void save(Checkpoint& ck) const;
  static GanState load(const Checkpoint& ck, AdamOptions adam = kGanAdam);
};

// One discriminator update on real+fake (non-saturating BCE), then one
// generator update unless `update_generator` is false.
GanStepResult gan_step(GanState& state, const std::vector<const ImageSample*>& real, Rng& rng,
                       bool update_generator = true);

struct GanTrainOptions {
  std::size_t steps = 500;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  AdamOptions adam = kGanAdam;
  // Discriminator-only warm-up steps, counted within `steps`.
  std::size_t frozen_generator_steps = 0;
  std::optional<std::filesystem::path> abort_checkpoint;
  std::function<void(const GanState&, const GanStepResult&)> on_step;
};

struct GanLogRow {
  std::uint64_t step = 0;
  GanStepResult result;
};

struct GanReport {
  std::vector<GanLogRow> rows;
  // step,d_loss,g_loss,d_acc
  void write_csv(const std::filesystem::path& path) const;
};

class GanDiverged : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Trains from a fresh state seeded by options.seed.
std::pair<GanState, GanReport> train_gan(const Dataset& data, const GanConfig& config, const GanTrainOptions& options);
// Continues an existing state.
GanReport train_gan(GanState& state, const Dataset& data, const GanTrainOptions& options);

// Generates n images labelled `label` with the inference-mode generator.
// Sample i uses noise from Rng(seed).split(label).split(i).
std::vector<Image> sample_images(GanState& state, int label, std::size_t n, std::uint64_t seed,
                                 std::size_t batch_size = 32);

// Fraction of real samples with logit > 0 plus fake samples with logit < 0.
double disc_accuracy(GanState& state, const Dataset& real, std::size_t n_fake, std::uint64_t seed);

// max_count - count_c images per class, provenance synthetic.
Dataset synthesize_for_balance(GanState& state, const ClassHistogram& histogram, std::uint64_t seed);

}  // namespace lesionaid
