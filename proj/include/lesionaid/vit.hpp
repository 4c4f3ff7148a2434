// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Vision Transformer classifier: patch extraction, linear patch projection,
// class token, learned positional embeddings, L pre-norm encoder layers and
// a linear head on the final class-token state.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "lesionaid/augment.hpp"
#include "lesionaid/checkpoint.hpp"
#include "lesionaid/dataset.hpp"
#include "lesionaid/optim.hpp"
#include "lesionaid/transformer.hpp"

namespace lesionaid {

struct VitConfig {
  std::size_t image_height = 64;
  std::size_t image_width = 64;
  std::size_t channels = 3;
  std::size_t patch = 8;
  std::size_t embed_dim = 64;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t head_dim = 16;
  std::size_t mlp_hidden = 128;
  std::size_t num_classes = kNumClasses;
  double dropout = 0.0;

  void validate() const;
  std::size_t num_patches() const { return (image_height / patch) * (image_width / patch); }
  std::size_t tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch * patch * channels; }
  AttentionShape attention() const { return {heads, head_dim, AttentionKind::kDotProduct}; }

  std::vector<double> to_array() const;
  static VitConfig from_array(const std::vector<double>& v);
};

template <typename T>
struct VitParams {
  VitConfig config;
  Tensor<T> patch_proj;   // E: [P*P*C, D]
  Tensor<T> class_token;  // [1, D]
  Tensor<T> pos_embed;    // [N+1, D]
  std::vector<EncoderLayerParams<T>> layers;
  Tensor<T> final_ln_gamma, final_ln_beta;
  Tensor<T> head_w, head_b;  // [D, classes], [classes]

  static VitParams init(const VitConfig& config, std::uint64_t seed);
  NamedTensors<T> named_parameters() const;
  std::vector<Tensor<T>> parameters() const;
};

// N x (P*P*C) rows in row-major patch order; each row is the patch's pixels
// in (row, column, channel) order.
std::vector<float> patchify(const Image& image, std::size_t patch);

template <typename T>
Tensor<T> patchify_batch(const std::vector<const Image*>& images, std::size_t patch);

// z0 = [class; x_1 E; ...; x_N E] + E_pos, for patches [B, N, P*P*C].
template <typename T>
Tensor<T> embed(const Tensor<T>& patches, const VitParams<T>& params);

template <typename T>
struct VitTrace {
  std::vector<Tensor<T>> attention;  // per layer, [B*h, T, T]
  std::vector<Tensor<T>> layer_outputs;
  Tensor<T> last_normed;  // LN1 output of the last encoder layer, [B, T, D]
  Tensor<T> features;     // final-LN class-token state, [B, D]
};

// Logits [B, classes]. Dropout is active only when `rng` is given.
template <typename T>
Tensor<T> vit_forward(const VitParams<T>& params, const Tensor<T>& patches, VitTrace<T>* trace = nullptr,
                      Rng* rng = nullptr);

// Softmax probabilities over the classes for one image.
std::vector<double> classify(const VitParams<float>& params, const Image& image);

// Class-token features [n, D] for a list of images, batched.
std::vector<std::vector<double>> vit_features(const VitParams<float>& params, const std::vector<const Image*>& images,
                                              std::size_t batch_size = 64);

// Argmax predictions, batched.
std::vector<int> predict(const VitParams<float>& params, const Dataset& dataset, std::size_t batch_size = 64);

void save_vit(Checkpoint& ck, const VitParams<float>& params);
VitParams<float> load_vit(const Checkpoint& ck);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0, train_acc = 0;
  double val_loss = 0, val_acc = 0;
  bool has_val = false;
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;

  // epoch,train_loss,train_acc,val_loss,val_acc
  void write_csv(const std::filesystem::path& path) const;
  static TrainReport read_csv(const std::filesystem::path& path);
};

struct VitTrainOptions {
  std::size_t epochs = 25;
  std::size_t batch_size = 32;
  AdamOptions adam = kClassifierAdam;
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentConfig augment_config = AugmentConfig::table_one();
  // Last-good parameters are written here if training diverges.
  std::optional<std::filesystem::path> abort_checkpoint;
  std::function<void(const EpochStats&)> on_epoch;
};

class TrainingDiverged : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
};

EvalResult evaluate(const VitParams<float>& params, const Dataset& dataset, std::size_t batch_size = 64);

// Cross-entropy + Adam on augmented train samples; train/val metrics are
// measured on the un-augmented sets after every epoch.
std::pair<VitParams<float>, TrainReport> train_classifier(const Dataset& train, const Dataset& val,
                                                          const VitConfig& config, const VitTrainOptions& options);

}  // namespace lesionaid
