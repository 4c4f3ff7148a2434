// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/vit.hpp"

#include <algorithm>
#include <cmath>

namespace lesionaid {

void VitConfig::validate() const {
  if (patch == 0 || image_height % patch != 0 || image_width % patch != 0) {
    throw ShapeError("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                     " is not divisible by patch size " + std::to_string(patch));
  }
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (embed_dim < 2 || heads == 0 || head_dim == 0 || layers == 0 || mlp_hidden == 0 || channels == 0) {
    throw ConfigError("transformer dimensions must be positive (embed_dim >= 2)");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

std::vector<double> VitConfig::to_array() const {
  return {static_cast<double>(image_height), static_cast<double>(image_width), static_cast<double>(channels),
          static_cast<double>(patch),        static_cast<double>(embed_dim),   static_cast<double>(layers),
          static_cast<double>(heads),        static_cast<double>(head_dim),    static_cast<double>(mlp_hidden),
          static_cast<double>(num_classes),  dropout};
}

VitConfig VitConfig::from_array(const std::vector<double>& v) {
  if (v.size() != 11) throw CheckpointError("vit.meta.config must hold 11 values");
  auto u = [&](std::size_t i) { return static_cast<std::size_t>(v[i]); };
  VitConfig c;
  c.image_height = u(0);
  c.image_width = u(1);
  c.channels = u(2);
  c.patch = u(3);
  c.embed_dim = u(4);
  c.layers = u(5);
  c.heads = u(6);
  c.head_dim = u(7);
  c.mlp_hidden = u(8);
  c.num_classes = u(9);
  c.dropout = v[10];
  return c;
}

template <typename T>
VitParams<T> VitParams<T>::init(const VitConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  VitParams<T> p;
  p.config = config;
  const std::size_t d = config.embed_dim;
  p.patch_proj = init_weight<T>(config.patch_dim(), d, rng);
  p.class_token = init_normal<T>({1, d}, 0.02, rng);
  p.pos_embed = init_normal<T>({config.tokens(), d}, 0.02, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    p.layers.push_back(init_encoder_layer<T>(d, config.mlp_hidden, config.attention(), rng));
  }
  p.final_ln_gamma = Tensor<T>::full({d}, T(1), true);
  p.final_ln_beta = Tensor<T>::zeros({d}, true);
  p.head_w = init_normal<T>({d, config.num_classes}, 0.02, rng);
  p.head_b = Tensor<T>::zeros({config.num_classes}, true);
  return p;
}

template <typename T>
NamedTensors<T> VitParams<T>::named_parameters() const {
  NamedTensors<T> out;
  out.emplace_back("vit.embed.E", patch_proj);
  out.emplace_back("vit.embed.cls", class_token);
  out.emplace_back("vit.embed.pos", pos_embed);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    append_named(out, "vit.layer" + std::to_string(l), layers[l], AttentionKind::kDotProduct);
  }
  out.emplace_back("vit.final_ln.gamma", final_ln_gamma);
  out.emplace_back("vit.final_ln.beta", final_ln_beta);
  out.emplace_back("vit.head.w", head_w);
  out.emplace_back("vit.head.b", head_b);
  return out;
}

template <typename T>
std::vector<Tensor<T>> VitParams<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<float> patchify(const Image& image, std::size_t patch) {
  if (patch == 0 || image.height % patch != 0 || image.width % patch != 0) {
    throw ShapeError("cannot patchify " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " image with patch size " + std::to_string(patch));
  }
  const std::size_t gh = image.height / patch, gw = image.width / patch;
  const std::size_t row_len = patch * patch * image.channels;
  std::vector<float> out(gh * gw * row_len);
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px) {
      float* row = out.data() + (py * gw + px) * row_len;
      for (std::size_t y = 0; y < patch; ++y) {
        const float* src = image.pixels.data() + ((py * patch + y) * image.width + px * patch) * image.channels;
        std::copy_n(src, patch * image.channels, row + y * patch * image.channels);
      }
    }
  return out;
}

template <typename T>
Tensor<T> patchify_batch(const std::vector<const Image*>& images, std::size_t patch) {
  if (images.empty()) throw ShapeError("patchify_batch needs at least one image");
  const Image& ref = *images[0];
  Buffer<T> data;
  std::size_t rows = 0, row_len = 0;
  for (const Image* img : images) {
    if (img->height != ref.height || img->width != ref.width || img->channels != ref.channels) {
      throw ShapeError("images in a batch must share one size");
    }
    auto p = patchify(*img, patch);
    data.insert(data.end(), p.begin(), p.end());
    row_len = patch * patch * img->channels;
    rows = p.size() / row_len;
  }
  return Tensor<T>::from_buffer({images.size(), rows, row_len}, std::move(data));
}

template <typename T>
Tensor<T> embed(const Tensor<T>& patches, const VitParams<T>& params) {
  const auto& cfg = params.config;
  if (patches.rank() != 3 || patches.dim(1) != cfg.num_patches() || patches.dim(2) != cfg.patch_dim()) {
    throw ShapeError("patches " + to_string(patches.shape()) + " do not match the configured " +
                     std::to_string(cfg.num_patches()) + " x " + std::to_string(cfg.patch_dim()));
  }
  const std::size_t batch = patches.dim(0), d = cfg.embed_dim;
  auto tokens = linear(patches, params.patch_proj);
  auto cls = add(Tensor<T>::zeros({batch, 1, d}), reshape(params.class_token, {1, 1, d}));
  return add(concat<T>({cls, tokens}, 1), params.pos_embed);
}

template <typename T>
Tensor<T> vit_forward(const VitParams<T>& params, const Tensor<T>& patches, VitTrace<T>* trace, Rng* rng) {
  const auto& cfg = params.config;
  const T drop = rng ? static_cast<T>(cfg.dropout) : T(0);
  auto z = embed(patches, params);
  if (drop > T(0)) z = dropout(z, drop, *rng);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    LayerTrace<T> lt;
    z = encoder_layer(z, params.layers[l], cfg.attention(), &lt, drop, rng);
    if (trace) {
      trace->attention.push_back(lt.attention);
      trace->layer_outputs.push_back(z);
      if (l + 1 == params.layers.size()) trace->last_normed = lt.normed;
    }
  }
  const std::size_t batch = patches.dim(0);
  auto cls = reshape(slice(layer_norm(z, params.final_ln_gamma, params.final_ln_beta), 1, 0, 1), {batch, cfg.embed_dim});
  if (trace) trace->features = cls;
  return linear(cls, params.head_w, params.head_b);
}

namespace {

void check_image(const VitConfig& cfg, const Image& image) {
  if (image.height != cfg.image_height || image.width != cfg.image_width || image.channels != cfg.channels) {
    throw ShapeError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                     std::to_string(image.channels) + " does not match classifier input " +
                     std::to_string(cfg.image_height) + "x" + std::to_string(cfg.image_width) + "x" +
                     std::to_string(cfg.channels));
  }
}

}  // namespace

std::vector<double> classify(const VitParams<float>& params, const Image& image) {
  check_image(params.config, image);
  NoGradGuard no_grad;
  auto logits = vit_forward(params, patchify_batch<float>({&image}, params.config.patch));
  auto probs = softmax(logits, -1);
  return {probs.data().begin(), probs.data().end()};
}

std::vector<std::vector<double>> vit_features(const VitParams<float>& params, const std::vector<const Image*>& images,
                                              std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t end = std::min(images.size(), start + batch_size);
    std::vector<const Image*> chunk(images.begin() + static_cast<long>(start), images.begin() + static_cast<long>(end));
    for (const Image* img : chunk) check_image(params.config, *img);
    VitTrace<float> trace;
    vit_forward(params, patchify_batch<float>(chunk, params.config.patch), &trace);
    const std::size_t d = params.config.embed_dim;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto f = trace.features.data().subspan(i * d, d);
      out.emplace_back(f.begin(), f.end());
    }
  }
  return out;
}

std::vector<int> predict(const VitParams<float>& params, const Dataset& dataset, std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<int> out;
  const std::size_t classes = params.config.num_classes;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    const std::size_t end = std::min(dataset.size(), start + batch_size);
    std::vector<const Image*> chunk;
    for (std::size_t i = start; i < end; ++i) {
      check_image(params.config, dataset[i].pixels);
      chunk.push_back(&dataset[i].pixels);
    }
    auto logits = vit_forward(params, patchify_batch<float>(chunk, params.config.patch));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto row = logits.data().subspan(i * classes, classes);
      out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

void save_vit(Checkpoint& ck, const VitParams<float>& params) {
  const auto cfg = params.config.to_array();
  ck.put<double>("vit.meta.config", {cfg.size()}, cfg);
  for (const auto& [name, t] : params.named_parameters()) ck.put(name, t);
}

VitParams<float> load_vit(const Checkpoint& ck) {
  const VitConfig cfg = VitConfig::from_array(ck.get<double>("vit.meta.config", {}));
  VitParams<float> p = VitParams<float>::init(cfg, 0);
  for (auto& [name, t] : p.named_parameters()) ck.load_into(name, t);
  return p;
}

template struct VitParams<float>;
template struct VitParams<double>;
template Tensor<float> patchify_batch<float>(const std::vector<const Image*>&, std::size_t);
template Tensor<double> patchify_batch<double>(const std::vector<const Image*>&, std::size_t);
template Tensor<float> embed<float>(const Tensor<float>&, const VitParams<float>&);
template Tensor<double> embed<double>(const Tensor<double>&, const VitParams<double>&);
template Tensor<float> vit_forward<float>(const VitParams<float>&, const Tensor<float>&, VitTrace<float>*, Rng*);
template Tensor<double> vit_forward<double>(const VitParams<double>&, const Tensor<double>&, VitTrace<double>*, Rng*);

}  // namespace lesionaid
