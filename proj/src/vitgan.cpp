// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/vitgan.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>

#include "lesionaid/csv.hpp"

namespace lesionaid {

void GanConfig::validate() const {
  if (latent_dim == 0) throw ConfigError("latent_dim must be at least 1");
  if (channels == 0 || image_size == 0) throw ConfigError("image size and channels must be positive");
  if (disc_patch == 0 || image_size % disc_patch != 0) {
    throw ShapeError("image side " + std::to_string(image_size) + " is not divisible by discriminator patch " +
                     std::to_string(disc_patch));
  }
  if (disc_patch + 2 * overlap > image_size) {
    throw ConfigError("overlapping patch side " + std::to_string(disc_patch + 2 * overlap) + " exceeds image side " +
                      std::to_string(image_size));
  }
  if (token_grid == 0 || image_size % token_grid != 0 || !std::has_single_bit(image_size / token_grid)) {
    throw ConfigError("image side / token grid must be a power of two");
  }
  if (conditional && num_classes < 1) throw ConfigError("conditional generator needs at least one class");
  if (disc_dim < 2 || gen_dim < 2 || disc_heads == 0 || gen_heads == 0 || disc_head_dim == 0 ||
      gen_head_dim == 0 || disc_layers == 0 || disc_mlp == 0 || gen_mlp == 0) {
    throw ConfigError("transformer dimensions must be positive");
  }
  if (!stage_channels.empty() && stage_channels.size() != upsample_stages()) {
    throw ConfigError("stage_channels lists " + std::to_string(stage_channels.size()) + " stages, need " +
                      std::to_string(upsample_stages()));
  }
}

std::size_t GanConfig::upsample_stages() const {
  return static_cast<std::size_t>(std::countr_zero(image_size / token_grid));
}

std::vector<std::size_t> GanConfig::resolved_stage_channels() const {
  if (!stage_channels.empty()) return stage_channels;
  std::vector<std::size_t> out;
  std::size_t c = gen_dim;
  for (std::size_t i = 0; i < upsample_stages(); ++i) {
    c = std::max<std::size_t>(8, c / 2);
    out.push_back(c);
  }
  return out;
}

std::vector<double> GanConfig::to_array() const {
  std::vector<double> v = {double(image_size),   double(channels),    double(latent_dim),    conditional ? 1.0 : 0.0,
                           double(num_classes),  double(disc_patch),  double(overlap),       double(disc_dim),
                           double(disc_layers),  double(disc_heads),  double(disc_head_dim), double(disc_mlp),
                           double(token_grid),   double(gen_dim),     double(gen_layers),    double(gen_heads),
                           double(gen_head_dim), double(gen_mlp),     double(stage_channels.size())};
  for (auto c : stage_channels) v.push_back(double(c));
  return v;
}

GanConfig GanConfig::from_array(const std::vector<double>& v) {
  if (v.size() < 19) throw CheckpointError("gan.meta.config is too short");
  auto u = [&](std::size_t i) { return static_cast<std::size_t>(v[i]); };
  GanConfig c;
  c.image_size = u(0);
  c.channels = u(1);
  c.latent_dim = u(2);
  c.conditional = v[3] != 0.0;
  c.num_classes = u(4);
  c.disc_patch = u(5);
  c.overlap = u(6);
  c.disc_dim = u(7);
  c.disc_layers = u(8);
  c.disc_heads = u(9);
  c.disc_head_dim = u(10);
  c.disc_mlp = u(11);
  c.token_grid = u(12);
  c.gen_dim = u(13);
  c.gen_layers = u(14);
  c.gen_heads = u(15);
  c.gen_head_dim = u(16);
  c.gen_mlp = u(17);
  const std::size_t n = u(18);
  if (v.size() != 19 + n) throw CheckpointError("gan.meta.config has a bad stage list");
  for (std::size_t i = 0; i < n; ++i) c.stage_channels.push_back(u(19 + i));
  return c;
}

namespace {

std::size_t reflect(long i, std::size_t n) {
  const long m = static_cast<long>(n);
  if (i < 0) i = -i;
  if (i >= m) i = 2 * (m - 1) - i;
  return static_cast<std::size_t>(i);
}

struct PatchGeometry {
  std::size_t grid_h, grid_w, side, row_len;
};

PatchGeometry check_geometry(std::size_t height, std::size_t width, std::size_t channels, std::size_t patch,
                             std::size_t overlap) {
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw ShapeError("cannot tile " + std::to_string(height) + "x" + std::to_string(width) + " with patch " +
                     std::to_string(patch));
  }
  const std::size_t side = patch + 2 * overlap;
  if (side > height || side > width) {
    throw ConfigError("overlapping patch side " + std::to_string(side) + " exceeds the image");
  }
  return {height / patch, width / patch, side, side * side * channels};
}

// For each output element of one image, the (y, x) source pixel.
template <typename F>
void for_each_patch_pixel(const PatchGeometry& g, std::size_t height, std::size_t width, std::size_t patch,
                          std::size_t overlap, F&& f) {
  for (std::size_t py = 0; py < g.grid_h; ++py)
    for (std::size_t px = 0; px < g.grid_w; ++px) {
      const std::size_t token = py * g.grid_w + px;
      for (std::size_t y = 0; y < g.side; ++y) {
        const std::size_t sy = reflect(static_cast<long>(py * patch + y) - static_cast<long>(overlap), height);
        for (std::size_t x = 0; x < g.side; ++x) {
          const std::size_t sx = reflect(static_cast<long>(px * patch + x) - static_cast<long>(overlap), width);
          f(token, y * g.side + x, sy, sx);
        }
      }
    }
}

template <typename T>
Tensor<T> one_hot(std::span<const int> labels, std::size_t classes) {
  Buffer<T> v(labels.size() * classes, T(0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ConfigError("label " + std::to_string(labels[i]) + " outside the generator's class set");
    }
    v[i * classes + static_cast<std::size_t>(labels[i])] = T(1);
  }
  return Tensor<T>::from_buffer({labels.size(), classes}, std::move(v));
}

template <typename T>
Tensor<T> he_conv(std::size_t out, std::size_t in, std::size_t k, std::size_t fan_in, Rng& rng) {
  return init_normal<T>({out, in, k, k}, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

template <typename T>
ConvBn<T> init_conv_bn(Tensor<T> weight, std::size_t channels) {
  ConvBn<T> c;
  c.weight = std::move(weight);
  c.bias = Tensor<T>::zeros({channels}, true);
  c.gamma = Tensor<T>::full({channels}, T(1), true);
  c.beta = Tensor<T>::zeros({channels}, true);
  c.stats.running_mean.assign(channels, T(0));
  c.stats.running_var.assign(channels, T(1));
  return c;
}

template <typename T>
ModulatedNorm<T> init_modulated(std::size_t latent, std::size_t dim, Rng& rng) {
  const double sd = 0.5 / std::sqrt(static_cast<double>(latent));
  ModulatedNorm<T> m;
  m.a_gamma = init_normal<T>({latent, dim}, sd, rng);
  m.b_gamma = Tensor<T>::full({dim}, T(1), true);
  m.a_beta = init_normal<T>({latent, dim}, sd, rng);
  m.b_beta = Tensor<T>::zeros({dim}, true);
  return m;
}

template <typename T>
Tensor<T> modulated_norm(const Tensor<T>& x, const ModulatedNorm<T>& m, const Tensor<T>& z) {
  const std::size_t b = x.dim(0), d = x.dim(2);
  auto gamma = reshape(linear(z, m.a_gamma, m.b_gamma), {b, 1, d});
  auto beta = reshape(linear(z, m.a_beta, m.b_beta), {b, 1, d});
  return add(mul(standardize(x), gamma), beta);
}

template <typename T>
void append_modulated(NamedTensors<T>& out, const std::string& prefix, const ModulatedNorm<T>& m) {
  out.emplace_back(prefix + ".a_gamma", m.a_gamma);
  out.emplace_back(prefix + ".b_gamma", m.b_gamma);
  out.emplace_back(prefix + ".a_beta", m.a_beta);
  out.emplace_back(prefix + ".b_beta", m.b_beta);
}

template <typename T>
void append_conv_bn(NamedTensors<T>& out, const std::string& prefix, const ConvBn<T>& c) {
  out.emplace_back(prefix + ".weight", c.weight);
  out.emplace_back(prefix + ".bias", c.bias);
  out.emplace_back(prefix + ".bn.gamma", c.gamma);
  out.emplace_back(prefix + ".bn.beta", c.beta);
}

}  // namespace

std::vector<float> disc_patchify_overlap(const Image& image, std::size_t patch, std::size_t overlap) {
  const auto g = check_geometry(image.height, image.width, image.channels, patch, overlap);
  std::vector<float> out(g.grid_h * g.grid_w * g.row_len);
  const std::size_t c = image.channels;
  for_each_patch_pixel(g, image.height, image.width, patch, overlap,
                       [&](std::size_t token, std::size_t pix, std::size_t sy, std::size_t sx) {
                         for (std::size_t ch = 0; ch < c; ++ch) {
                           out[token * g.row_len + pix * c + ch] = image.at(sy, sx, ch);
                         }
                       });
  return out;
}

template <typename T>
Tensor<T> disc_patchify(const Tensor<T>& images, std::size_t patch, std::size_t overlap) {
  if (images.rank() != 4) throw ShapeError("disc_patchify expects NCHW, got " + to_string(images.shape()));
  const std::size_t batch = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const auto g = check_geometry(h, w, c, patch, overlap);
  const std::size_t tokens = g.grid_h * g.grid_w, per_image = tokens * g.row_len;
  // Source offset inside one CHW image for every output element.
  auto index = std::make_shared<std::vector<std::size_t>>(per_image);
  for_each_patch_pixel(g, h, w, patch, overlap,
                       [&](std::size_t token, std::size_t pix, std::size_t sy, std::size_t sx) {
                         for (std::size_t ch = 0; ch < c; ++ch) {
                           (*index)[token * g.row_len + pix * c + ch] = (ch * h + sy) * w + sx;
                         }
                       });
  const std::size_t plane = c * h * w;
  const auto src = images.data();
  Buffer<T> out(batch * per_image);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < per_image; ++i) out[b * per_image + i] = src[b * plane + (*index)[i]];
  return Tensor<T>::make_result({batch, tokens, g.row_len}, std::move(out), {images},
                                [index, batch, per_image, plane](Node<T>& self) {
                                  auto& gx = self.parents[0]->grad_buffer();
                                  for (std::size_t b = 0; b < batch; ++b)
                                    for (std::size_t i = 0; i < per_image; ++i)
                                      gx[b * plane + (*index)[i]] += self.grad[b * per_image + i];
                                });
}

template <typename T>
Tensor<T> l2_attention(const Tensor<T>& x, const AttentionParams<T>& p, const AttentionShape& shape,
                       Tensor<T>* weights) {
  if (p.wk.node() != p.wq.node()) throw ConfigError("L2 attention needs tied query/key projections");
  AttentionShape s = shape;
  s.kind = AttentionKind::kL2;
  return multi_head_attention(x, p, s, weights);
}

template <typename T>
DiscParams<T> DiscParams<T>::init(const GanConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.disc_dim;
  DiscParams<T> p;
  p.patch_proj = init_weight<T>(config.disc_patch_dim(), d, rng);
  p.class_token = init_normal<T>({1, d}, 0.02, rng);
  p.pos_embed = init_normal<T>({config.disc_tokens() + 1, d}, 0.02, rng);
  const AttentionShape shape{config.disc_heads, config.disc_head_dim, AttentionKind::kL2};
  for (std::size_t l = 0; l < config.disc_layers; ++l) {
    p.layers.push_back(init_encoder_layer<T>(d, config.disc_mlp, shape, rng));
  }
  p.final_ln_gamma = Tensor<T>::full({d}, T(1), true);
  p.final_ln_beta = Tensor<T>::zeros({d}, true);
  p.head_w = init_normal<T>({d, 1}, 0.02, rng);
  p.head_b = Tensor<T>::zeros({1}, true);
  if (config.conditional) p.class_embed = init_normal<T>({config.num_classes, d}, 0.02, rng);
  return p;
}

template <typename T>
NamedTensors<T> DiscParams<T>::named_parameters() const {
  NamedTensors<T> out;
  out.emplace_back("embed.E", patch_proj);
  out.emplace_back("embed.cls", class_token);
  out.emplace_back("embed.pos", pos_embed);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    append_named(out, "layer" + std::to_string(l), layers[l], AttentionKind::kL2);
  }
  out.emplace_back("final_ln.gamma", final_ln_gamma);
  out.emplace_back("final_ln.beta", final_ln_beta);
  out.emplace_back("head.w", head_w);
  out.emplace_back("head.b", head_b);
  if (class_embed.defined()) out.emplace_back("class_embed", class_embed);
  return out;
}

template <typename T>
GenParams<T> GenParams<T>::init(const GanConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.gen_dim, latent = config.latent_dim;
  GenParams<T> p;
  p.tokens = init_normal<T>({config.token_grid * config.token_grid, d}, 1.0, rng);
  if (config.conditional) p.class_embed = init_normal<T>({config.num_classes, latent}, 1.0, rng);
  const AttentionShape shape{config.gen_heads, config.gen_head_dim, AttentionKind::kDotProduct};
  for (std::size_t l = 0; l < config.gen_layers; ++l) {
    GenBlock<T> b;
    b.ln1 = init_modulated<T>(latent, d, rng);
    b.attn = init_attention<T>(d, shape, rng);
    b.ln2 = init_modulated<T>(latent, d, rng);
    b.mlp.w1 = init_weight<T>(d, config.gen_mlp, rng);
    b.mlp.b1 = Tensor<T>::zeros({config.gen_mlp}, true);
    b.mlp.w2 = init_weight<T>(config.gen_mlp, d, rng);
    b.mlp.b2 = Tensor<T>::zeros({d}, true);
    p.blocks.push_back(std::move(b));
  }
  p.final_ln = init_modulated<T>(latent, d, rng);
  p.res1 = init_conv_bn<T>(he_conv<T>(d, d, 3, d * 9, rng), d);
  p.res2 = init_conv_bn<T>(he_conv<T>(d, d, 3, d * 9, rng), d);
  std::size_t in = d;
  for (std::size_t out : config.resolved_stage_channels()) {
    // Transposed-conv weights are [in, out, k, k].
    p.up.push_back(init_conv_bn<T>(he_conv<T>(in, out, 4, in * 4, rng), out));
    in = out;
  }
  p.out_w = init_normal<T>({config.channels, in, 3, 3}, std::sqrt(1.0 / static_cast<double>(in * 9)), rng);
  p.out_b = Tensor<T>::zeros({config.channels}, true);
  return p;
}

template <typename T>
NamedTensors<T> GenParams<T>::named_parameters() const {
  NamedTensors<T> out;
  out.emplace_back("tokens", tokens);
  if (class_embed.defined()) out.emplace_back("class_embed", class_embed);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string pre = "block" + std::to_string(l);
    const auto& b = blocks[l];
    append_modulated(out, pre + ".ln1", b.ln1);
    out.emplace_back(pre + ".wq", b.attn.wq);
    out.emplace_back(pre + ".wk", b.attn.wk);
    out.emplace_back(pre + ".wv", b.attn.wv);
    out.emplace_back(pre + ".wo", b.attn.wo);
    append_modulated(out, pre + ".ln2", b.ln2);
    out.emplace_back(pre + ".mlp.w1", b.mlp.w1);
    out.emplace_back(pre + ".mlp.b1", b.mlp.b1);
    out.emplace_back(pre + ".mlp.w2", b.mlp.w2);
    out.emplace_back(pre + ".mlp.b2", b.mlp.b2);
  }
  append_modulated(out, "final_ln", final_ln);
  append_conv_bn(out, "res1", res1);
  append_conv_bn(out, "res2", res2);
  for (std::size_t i = 0; i < up.size(); ++i) append_conv_bn(out, "up" + std::to_string(i), up[i]);
  out.emplace_back("out.weight", out_w);
  out.emplace_back("out.bias", out_b);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, BatchNormStats<T>*>> GenParams<T>::named_buffers() {
  std::vector<std::pair<std::string, BatchNormStats<T>*>> out;
  out.emplace_back("res1.bn", &res1.stats);
  out.emplace_back("res2.bn", &res2.stats);
  for (std::size_t i = 0; i < up.size(); ++i) out.emplace_back("up" + std::to_string(i) + ".bn", &up[i].stats);
  return out;
}

template <typename T>
Tensor<T> discriminate(const DiscParams<T>& params, const GanConfig& config, const Tensor<T>& patches,
                       std::span<const int> labels) {
  if (patches.rank() != 3 || patches.dim(1) != config.disc_tokens() || patches.dim(2) != config.disc_patch_dim()) {
    throw ShapeError("discriminator patches " + to_string(patches.shape()) + " do not match the config");
  }
  const std::size_t batch = patches.dim(0), d = config.disc_dim;
  auto tokens = linear(patches, params.patch_proj);
  auto cls = add(Tensor<T>::zeros({batch, 1, d}), reshape(params.class_token, {1, 1, d}));
  auto z = add(concat<T>({cls, tokens}, 1), params.pos_embed);
  const AttentionShape shape{config.disc_heads, config.disc_head_dim, AttentionKind::kL2};
  for (const auto& layer : params.layers) z = encoder_layer(z, layer, shape);
  auto feat = reshape(slice(layer_norm(z, params.final_ln_gamma, params.final_ln_beta), 1, 0, 1), {batch, d});
  auto logit = linear(feat, params.head_w, params.head_b);
  if (config.conditional) {
    if (labels.size() != batch) throw ShapeError("conditional discriminator needs one label per image");
    // Projection term <embed(y), features>.
    auto emb = matmul(one_hot<T>(labels, config.num_classes), params.class_embed);
    logit = add(logit, linear(mul(feat, emb), Tensor<T>::full({d, 1}, T(1))));
  }
  return reshape(logit, {batch});
}

template <typename T>
Tensor<T> generate(GenParams<T>& params, const GanConfig& config, const Tensor<T>& z, std::span<const int> labels,
                   bool training) {
  if (z.rank() != 2 || z.dim(1) != config.latent_dim) {
    throw ShapeError("latent " + to_string(z.shape()) + " does not have length " + std::to_string(config.latent_dim));
  }
  const std::size_t batch = z.dim(0), d = config.gen_dim, g = config.token_grid;
  Tensor<T> zc = z;
  if (config.conditional) {
    if (labels.size() != batch) throw ShapeError("conditional generator needs one label per latent");
    zc = add(z, matmul(one_hot<T>(labels, config.num_classes), params.class_embed));
  }
  auto x = add(Tensor<T>::zeros({batch, g * g, d}), params.tokens);
  const AttentionShape shape{config.gen_heads, config.gen_head_dim, AttentionKind::kDotProduct};
  for (const auto& b : params.blocks) {
    x = add(multi_head_attention(modulated_norm(x, b.ln1, zc), b.attn, shape), x);
    x = add(mlp_block(modulated_norm(x, b.ln2, zc), b.mlp), x);
  }
  x = modulated_norm(x, params.final_ln, zc);
  auto fm = permute(reshape(x, {batch, g, g, d}), {0, 3, 1, 2});

  auto conv_bn = [&](const Tensor<T>& in, ConvBn<T>& c) {
    return batch_norm2d(conv2d(in, c.weight, c.bias, 1, 1), c.gamma, c.beta, c.stats, training);
  };
  auto h = relu(conv_bn(fm, params.res1));
  fm = relu(add(conv_bn(h, params.res2), fm));
  for (auto& u : params.up) {
    fm = leaky_relu(batch_norm2d(conv_transpose2d(fm, u.weight, u.bias, 2, 1), u.gamma, u.beta, u.stats, training));
  }
  auto out = tanh(conv2d(fm, params.out_w, params.out_b, 1, 1));
  return add_scalar(scale(out, T(0.5)), T(0.5));
}

std::vector<Image> tensor_to_images(const Tensor<float>& nchw) {
  const std::size_t b = nchw.dim(0), c = nchw.dim(1), h = nchw.dim(2), w = nchw.dim(3);
  std::vector<Image> out;
  const auto v = nchw.data();
  for (std::size_t i = 0; i < b; ++i) {
    Image img(h, w, c);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          img.at(y, x, ch) = std::clamp(v[((i * c + ch) * h + y) * w + x], 0.0f, 1.0f);
    out.push_back(std::move(img));
  }
  return out;
}

Tensor<float> images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("images_to_tensor needs at least one image");
  const Image& ref = *images[0];
  const std::size_t c = ref.channels, h = ref.height, w = ref.width;
  std::vector<float> v(images.size() * c * h * w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = *images[i];
    if (img.height != h || img.width != w || img.channels != c) throw ShapeError("images in a batch must share one size");
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) v[((i * c + ch) * h + y) * w + x] = img.at(y, x, ch);
  }
  return Tensor<float>::from({images.size(), c, h, w}, std::move(v));
}

namespace {

Tensor<float> sample_noise(std::size_t n, std::size_t latent, Rng& rng) {
  std::vector<float> v(n * latent);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return Tensor<float>::from({n, latent}, std::move(v));
}

std::vector<Tensor<float>> tensors_of(const NamedTensors<float>& named) {
  std::vector<Tensor<float>> out;
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

void save_adam(Checkpoint& ck, const std::string& prefix, const Adam<float>& opt, const NamedTensors<float>& named) {
  const auto& st = opt.state();
  const double step = static_cast<double>(st.step);
  ck.put<double>(prefix + ".step", {1}, std::span<const double>(&step, 1));
  if (st.first_moment.empty()) return;
  for (std::size_t i = 0; i < named.size(); ++i) {
    ck.put<float>(prefix + ".m." + named[i].first, named[i].second.shape(), st.first_moment[i]);
    ck.put<float>(prefix + ".v." + named[i].first, named[i].second.shape(), st.second_moment[i]);
  }
}

void load_adam(const Checkpoint& ck, const std::string& prefix, Adam<float>& opt, const NamedTensors<float>& named) {
  auto& st = opt.state();
  st.step = static_cast<std::uint64_t>(ck.get<double>(prefix + ".step", {1})[0]);
  if (!ck.contains(prefix + ".m." + named.front().first)) return;
  st.first_moment.clear();
  st.second_moment.clear();
  for (const auto& [name, t] : named) {
    st.first_moment.push_back(ck.get<float>(prefix + ".m." + name, t.shape()));
    st.second_moment.push_back(ck.get<float>(prefix + ".v." + name, t.shape()));
  }
}

constexpr std::size_t kEvalNoise = 16;

}  // namespace

GanState GanState::init(const GanConfig& config, std::uint64_t seed, AdamOptions adam) {
  config.validate();
  const Rng root(seed);
  GanState s;
  s.config = config;
  Rng gen_rng = root.split(1), disc_rng = root.split(2), noise_rng = root.split(3);
  s.gen = GenParams<float>::init(config, gen_rng);
  s.disc = DiscParams<float>::init(config, disc_rng);
  s.gen_opt.emplace(tensors_of(s.gen.named_parameters()), adam);
  s.disc_opt.emplace(tensors_of(s.disc.named_parameters()), adam);
  s.eval_noise = sample_noise(kEvalNoise, config.latent_dim, noise_rng);
  for (std::size_t i = 0; i < kEvalNoise; ++i) {
    s.eval_labels.push_back(config.conditional ? static_cast<int>(i % config.num_classes) : 0);
  }
  return s;
}

void GanState::save(Checkpoint& ck) const {
  const auto cfg = config.to_array();
  ck.put<double>("gan.meta.config", {cfg.size()}, cfg);
  const double meta[2] = {static_cast<double>(step), static_cast<double>(epoch)};
  ck.put<double>("gan.meta.step", {1}, std::span<const double>(meta, 1));
  ck.put<double>("gan.meta.epoch", {1}, std::span<const double>(meta + 1, 1));
  ck.put("gan.meta.eval_noise", eval_noise);
  std::vector<double> labels(eval_labels.begin(), eval_labels.end());
  ck.put<double>("gan.meta.eval_labels", {labels.size()}, labels);
  const auto gen_named = gen.named_parameters();
  const auto disc_named = disc.named_parameters();
  for (const auto& [name, t] : gen_named) ck.put("gan.gen." + name, t);
  for (auto& [name, stats] : const_cast<GenParams<float>&>(gen).named_buffers()) {
    const Shape shape{stats->running_mean.size()};
    ck.put<float>("gan.gen." + name + ".running_mean", shape, stats->running_mean);
    ck.put<float>("gan.gen." + name + ".running_var", shape, stats->running_var);
  }
  for (const auto& [name, t] : disc_named) ck.put("gan.disc." + name, t);
  if (gen_opt) save_adam(ck, "gan.opt.gen", *gen_opt, gen_named);
  if (disc_opt) save_adam(ck, "gan.opt.disc", *disc_opt, disc_named);
}

GanState GanState::load(const Checkpoint& ck, AdamOptions adam) {
  const GanConfig config = GanConfig::from_array(ck.get<double>("gan.meta.config", {}));
  GanState s = GanState::init(config, 0, adam);
  s.step = static_cast<std::uint64_t>(ck.get<double>("gan.meta.step", {1})[0]);
  s.epoch = static_cast<std::uint64_t>(ck.get<double>("gan.meta.epoch", {1})[0]);
  ck.load_into("gan.meta.eval_noise", s.eval_noise);
  const auto labels = ck.get<double>("gan.meta.eval_labels", {s.eval_labels.size()});
  for (std::size_t i = 0; i < labels.size(); ++i) s.eval_labels[i] = static_cast<int>(labels[i]);
  auto gen_named = s.gen.named_parameters();
  auto disc_named = s.disc.named_parameters();
  for (auto& [name, t] : gen_named) ck.load_into("gan.gen." + name, t);
  for (auto& [name, stats] : s.gen.named_buffers()) {
    const Shape shape{stats->running_mean.size()};
    stats->running_mean = ck.get<float>("gan.gen." + name + ".running_mean", shape);
    stats->running_var = ck.get<float>("gan.gen." + name + ".running_var", shape);
  }
  for (auto& [name, t] : disc_named) ck.load_into("gan.disc." + name, t);
  if (ck.contains("gan.opt.gen.step")) load_adam(ck, "gan.opt.gen", *s.gen_opt, gen_named);
  if (ck.contains("gan.opt.disc.step")) load_adam(ck, "gan.opt.disc", *s.disc_opt, disc_named);
  return s;
}

GanStepResult gan_step(GanState& state, const std::vector<const ImageSample*>& real, Rng& rng,
                       bool update_generator) {
  if (real.empty()) throw DatasetError("gan_step needs a non-empty real batch");
  const GanConfig& cfg = state.config;
  const std::size_t batch = real.size();
  std::vector<const Image*> images;
  std::vector<int> labels;
  for (const auto* s : real) {
    if (s->pixels.height != cfg.image_size || s->pixels.width != cfg.image_size || s->pixels.channels != cfg.channels) {
      throw ShapeError("real image " + s->id + " does not match the GAN image size " + std::to_string(cfg.image_size));
    }
    images.push_back(&s->pixels);
    labels.push_back(cfg.conditional ? s->label : 0);
  }
  const std::vector<float> ones(batch, 1.0f), zeros(batch, 0.0f);
  GanStepResult r;

  // Discriminator update.
  Tensor<float> fake;
  {
    NoGradGuard no_grad;
    fake = generate(state.gen, cfg, sample_noise(batch, cfg.latent_dim, rng), labels, true);
  }
  auto d_real = discriminate(state.disc, cfg, disc_patchify(images_to_tensor(images), cfg.disc_patch, cfg.overlap),
                             labels);
  auto d_fake = discriminate(state.disc, cfg, disc_patchify(fake, cfg.disc_patch, cfg.overlap), labels);
  auto d_loss = add(bce_with_logits(d_real, std::span<const float>(ones)),
                    bce_with_logits(d_fake, std::span<const float>(zeros)));
  std::size_t correct = 0;
  for (float v : d_real.data()) correct += v > 0.0f;
  for (float v : d_fake.data()) correct += v < 0.0f;
  r.d_accuracy = static_cast<double>(correct) / static_cast<double>(2 * batch);
  r.d_loss = d_loss.item();
  state.disc_opt->zero_grad();
  d_loss.backward();
  state.disc_opt->step();

  // Generator update.
  if (update_generator) {
    auto fake_g = generate(state.gen, cfg, sample_noise(batch, cfg.latent_dim, rng), labels, true);
    auto d_out = discriminate(state.disc, cfg, disc_patchify(fake_g, cfg.disc_patch, cfg.overlap), labels);
    auto g_loss = bce_with_logits(d_out, std::span<const float>(ones));
    r.g_loss = g_loss.item();
    state.gen_opt->zero_grad();
    g_loss.backward();
    state.gen_opt->step();
    state.disc_opt->zero_grad();
  }
  ++state.step;
  return r;
}

void GanReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DatasetError("cannot write report '" + path.string() + "'");
  os << "step,d_loss,g_loss,d_acc\n";
  for (const auto& row : rows) {
    os << row.step << ',' << format_number(row.result.d_loss) << ',' << format_number(row.result.g_loss) << ','
       << format_number(row.result.d_accuracy) << '\n';
  }
}

GanReport train_gan(GanState& state, const Dataset& data, const GanTrainOptions& options) {
  if (data.empty()) throw DatasetError("train_gan: empty dataset");
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  const Rng root(options.seed);
  const std::size_t n = data.size(), b = std::min(options.batch_size, data.size());
  std::map<std::uint64_t, std::vector<std::size_t>> perms;
  auto perm = [&](std::uint64_t epoch) -> const std::vector<std::size_t>& {
    auto it = perms.find(epoch);
    if (it != perms.end()) return it->second;
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    Rng r = root.split(2).split(epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[r.below(i)]);
    perms.erase(perms.begin(), perms.lower_bound(epoch));
    return perms.emplace(epoch, std::move(p)).first->second;
  };

  GanReport report;
  Checkpoint last_good;
  state.save(last_good);
  for (std::size_t k = 0; k < options.steps; ++k) {
    const std::uint64_t step = state.step;
    std::vector<const ImageSample*> batch;
    for (std::size_t j = 0; j < b; ++j) {
      const std::uint64_t g = step * b + j;
      batch.push_back(&data[perm(g / n)[g % n]]);
    }
    Rng rng = root.split(3).split(step);
    GanStepResult r;
    try {
      r = gan_step(state, batch, rng, k >= options.frozen_generator_steps);
      if (!std::isfinite(r.d_loss) || !std::isfinite(r.g_loss)) throw NumericalError("non-finite GAN loss");
    } catch (const NumericalError& e) {
      if (options.abort_checkpoint) last_good.save(*options.abort_checkpoint);
      throw GanDiverged("GAN training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    state.epoch = (state.step * b) / n;
    report.rows.push_back({state.step, r});
    if (options.on_step) options.on_step(state, r);
    if (options.abort_checkpoint) {
      last_good = Checkpoint();
      state.save(last_good);
    }
  }
  return report;
}

std::pair<GanState, GanReport> train_gan(const Dataset& data, const GanConfig& config, const GanTrainOptions& options) {
  GanState state = GanState::init(config, Rng(options.seed).split(1).next_u64(), options.adam);
  GanReport report = train_gan(state, data, options);
  return {std::move(state), std::move(report)};
}

std::vector<Image> sample_images(GanState& state, int label, std::size_t n, std::uint64_t seed,
                                 std::size_t batch_size) {
  const GanConfig& cfg = state.config;
  if (cfg.conditional && (label < 0 || static_cast<std::size_t>(label) >= cfg.num_classes)) {
    throw ConfigError("label " + std::to_string(label) + " outside the generator's class set");
  }
  NoGradGuard no_grad;
  const Rng class_rng = Rng(seed).split(static_cast<std::uint64_t>(label));
  std::vector<Image> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t m = std::min(batch_size, n - start);
    std::vector<float> z;
    for (std::size_t i = 0; i < m; ++i) {
      Rng r = class_rng.split(start + i);
      for (std::size_t j = 0; j < cfg.latent_dim; ++j) z.push_back(static_cast<float>(r.normal()));
    }
    const std::vector<int> labels(m, cfg.conditional ? label : 0);
    auto imgs = tensor_to_images(generate(state.gen, cfg, Tensor<float>::from({m, cfg.latent_dim}, std::move(z)),
                                          labels, false));
    for (auto& img : imgs) out.push_back(std::move(img));
  }
  return out;
}

double disc_accuracy(GanState& state, const Dataset& real, std::size_t n_fake, std::uint64_t seed) {
  if (real.empty()) throw DatasetError("disc_accuracy needs real samples");
  const GanConfig& cfg = state.config;
  NoGradGuard no_grad;
  std::size_t correct = 0;
  constexpr std::size_t kBatch = 32;
  for (std::size_t start = 0; start < real.size(); start += kBatch) {
    const std::size_t end = std::min(real.size(), start + kBatch);
    std::vector<const Image*> images;
    std::vector<int> labels;
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(&real[i].pixels);
      labels.push_back(cfg.conditional ? real[i].label : 0);
    }
    auto logits = discriminate(state.disc, cfg, disc_patchify(images_to_tensor(images), cfg.disc_patch, cfg.overlap),
                               labels);
    for (float v : logits.data()) correct += v > 0.0f;
  }
  // Fakes use batch statistics, as during training; running stats are restored.
  std::vector<BatchNormStats<float>> saved;
  for (auto& [name, stats] : state.gen.named_buffers()) saved.push_back(*stats);
  Rng rng(seed);
  for (std::size_t start = 0; start < n_fake; start += kBatch) {
    const std::size_t m = std::min(kBatch, n_fake - start);
    std::vector<int> labels;
    for (std::size_t i = 0; i < m; ++i) labels.push_back(cfg.conditional ? real[(start + i) % real.size()].label : 0);
    auto fake = generate(state.gen, cfg, sample_noise(m, cfg.latent_dim, rng), labels, true);
    auto logits = discriminate(state.disc, cfg, disc_patchify(fake, cfg.disc_patch, cfg.overlap), labels);
    for (float v : logits.data()) correct += v < 0.0f;
  }
  std::size_t i = 0;
  for (auto& [name, stats] : state.gen.named_buffers()) *stats = saved[i++];
  return static_cast<double>(correct) / static_cast<double>(real.size() + n_fake);
}

Dataset synthesize_for_balance(GanState& state, const ClassHistogram& histogram, std::uint64_t seed) {
  const GanConfig& cfg = state.config;
  const std::size_t target = histogram.max_count();
  std::vector<int> deficit_classes;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (histogram.counts[c] > 0 && histogram.counts[c] < target) deficit_classes.push_back(static_cast<int>(c));
  }
  if (!cfg.conditional && deficit_classes.size() > 1) {
    throw ConfigError("unconditional generator cannot fill deficits in " + std::to_string(deficit_classes.size()) +
                      " classes");
  }
  Dataset out;
  for (int c : deficit_classes) {
    const std::size_t need = target - histogram.counts[static_cast<std::size_t>(c)];
    auto images = sample_images(state, cfg.conditional ? c : 0, need, seed);
    for (std::size_t i = 0; i < images.size(); ++i) {
      ImageSample s;
      s.pixels = std::move(images[i]);
      s.label = c;
      char id[64];
      std::snprintf(id, sizeof id, "syn_%s_%06zu", std::string(label_name(c)).c_str(), i);
      s.id = id;
      s.provenance = Provenance::kSynthetic;
      out.push_back(std::move(s));
    }
  }
  return out;
}

template Tensor<float> disc_patchify<float>(const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> disc_patchify<double>(const Tensor<double>&, std::size_t, std::size_t);
template Tensor<float> l2_attention<float>(const Tensor<float>&, const AttentionParams<float>&,
                                           const AttentionShape&, Tensor<float>*);
template Tensor<double> l2_attention<double>(const Tensor<double>&, const AttentionParams<double>&,
                                             const AttentionShape&, Tensor<double>*);
template struct DiscParams<float>;
template struct DiscParams<double>;
template struct GenParams<float>;
template struct GenParams<double>;
template Tensor<float> discriminate<float>(const DiscParams<float>&, const GanConfig&, const Tensor<float>&,
                                           std::span<const int>);
template Tensor<double> discriminate<double>(const DiscParams<double>&, const GanConfig&, const Tensor<double>&,
                                             std::span<const int>);
template Tensor<float> generate<float>(GenParams<float>&, const GanConfig&, const Tensor<float>&, std::span<const int>,
                                       bool);
template Tensor<double> generate<double>(GenParams<double>&, const GanConfig&, const Tensor<double>&,
                                         std::span<const int>, bool);

}  // namespace lesionaid
