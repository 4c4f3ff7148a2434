// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "lesionaid/csv.hpp"
#include "lesionaid/rng.hpp"

namespace lesionaid {

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r' && c != '\n') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DatasetError("cannot open CSV '" + path.string() + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw DatasetError("empty CSV '" + path.string() + "'");
  t.header = split_csv_line(line);
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    t.rows.push_back(split_csv_line(line));
  }
  return t;
}

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::optional<int> label_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::string_view label_name(int label) { return kClassNames.at(static_cast<std::size_t>(label)); }

std::string_view provenance_name(Provenance p) { return p == Provenance::kReal ? "real" : "synthetic"; }

ClassHistogram ClassHistogram::from_counts(const std::map<std::string, std::size_t>& by_name) {
  ClassHistogram h;
  for (const auto& [name, n] : by_name) {
    auto label = label_from_name(name);
    if (!label) throw DatasetError("unknown lesion class '" + name + "'");
    h.counts[static_cast<std::size_t>(*label)] = n;
  }
  return h;
}

std::size_t ClassHistogram::total() const {
  std::size_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

std::size_t ClassHistogram::max_count() const { return *std::max_element(counts.begin(), counts.end()); }

double ClassHistogram::imbalance_ratio() const {
  std::size_t lo = 0, hi = 0;
  for (auto c : counts) {
    if (c == 0) continue;
    lo = lo == 0 ? c : std::min(lo, c);
    hi = std::max(hi, c);
  }
  return lo == 0 ? 1.0 : static_cast<double>(hi) / static_cast<double>(lo);
}

ClassHistogram class_histogram(const Dataset& dataset) {
  ClassHistogram h;
  for (const auto& s : dataset) h.counts.at(static_cast<std::size_t>(s.label))++;
  return h;
}

Dataset ingest(const std::filesystem::path& dir, const std::filesystem::path& metadata, std::size_t height,
               std::size_t width) {
  const CsvTable table = read_csv(metadata);
  const int id_col = table.column("image_id");
  const int dx_col = table.column("dx");
  if (id_col < 0 || dx_col < 0) {
    throw DatasetError("metadata '" + metadata.string() + "' must have columns image_id and dx");
  }
  Dataset out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() <= static_cast<std::size_t>(std::max(id_col, dx_col))) {
      throw DatasetError("metadata row " + std::to_string(r + 2) + " has too few columns");
    }
    const std::string& id = row[static_cast<std::size_t>(id_col)];
    const std::string& dx = row[static_cast<std::size_t>(dx_col)];
    auto label = label_from_name(dx);
    if (!label) {
      throw DatasetError("unknown dx '" + dx + "' at metadata row " + std::to_string(r + 2) + " (image_id " + id +
                         ")");
    }
    std::filesystem::path file;
    for (const char* ext : {".jpg", ".jpeg", ".png", ".JPG", ".JPEG", ".PNG"}) {
      auto candidate = dir / (id + ext);
      if (std::filesystem::exists(candidate)) {
        file = candidate;
        break;
      }
    }
    if (file.empty()) throw DatasetError("missing image file for image_id " + id + " in '" + dir.string() + "'");
    ImageSample s;
    s.pixels = resize_bilinear(read_image(file), height, width);
    s.label = *label;
    s.id = id;
    s.provenance = Provenance::kReal;
    out.push_back(std::move(s));
  }
  return out;
}

const std::array<LesionStyle, kNumClasses>& toy_lesion_styles() {
  static const std::array<LesionStyle, kNumClasses> styles = {{
      {{0.78f, 0.38f, 0.36f}, 0.28f, 0.75f, 0.12f, 1, 0.12f, 0.04f},  // akiec: scaly red, speckled
      {{0.80f, 0.44f, 0.62f}, 0.25f, 0.90f, 0.15f, 2, 0.55f, 0.04f},  // bcc: pearly pink, dark globules
      {{0.62f, 0.46f, 0.30f}, 0.33f, 0.80f, 0.22f, 5, 0.10f, 0.04f},  // bkl: tan, mottled
      {{0.52f, 0.34f, 0.30f}, 0.22f, 0.95f, 0.20f, 3, 0.55f, 0.04f},  // df: dark centre, pale ring
      {{0.22f, 0.14f, 0.15f}, 0.34f, 0.70f, 0.10f, 4, 0.50f, 0.04f},  // mel: very dark, radial streaks
      {{0.45f, 0.28f, 0.18f}, 0.26f, 0.90f, 0.05f, 0, 0.00f, 0.04f},  // nv: uniform brown
      {{0.62f, 0.12f, 0.30f}, 0.23f, 0.85f, 0.10f, 6, 0.40f, 0.04f},  // vasc: red-purple lobes
  }};
  return styles;
}

namespace {

constexpr std::array<float, 3> kSkin = {0.87f, 0.68f, 0.58f};

ImageSample render_toy_lesion(int label, std::size_t index, std::size_t height, std::size_t width, Rng rng) {
  const LesionStyle& st = toy_lesion_styles()[static_cast<std::size_t>(label)];
  const double side = static_cast<double>(std::min(height, width));
  const double tone = rng.uniform(-0.06, 0.06);
  std::array<double, 3> skin{}, color{};
  for (int c = 0; c < 3; ++c) {
    skin[c] = kSkin[c] + tone;
    color[c] = st.color[c] + rng.uniform(-st.color_jitter, st.color_jitter);
  }
  const double cx = 0.5 * static_cast<double>(width) + rng.uniform(-0.08, 0.08) * side;
  const double cy = 0.5 * static_cast<double>(height) + rng.uniform(-0.08, 0.08) * side;
  const double a = st.size * side * rng.uniform(0.85, 1.15);
  const double b = a * std::min(1.0, st.elongation * rng.uniform(0.92, 1.08));
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double ct = std::cos(theta), snt = std::sin(theta);
  const double phase1 = rng.uniform(0.0, 2 * std::numbers::pi);
  const double phase2 = rng.uniform(0.0, 2 * std::numbers::pi);
  std::array<std::array<double, 2>, 8> dots{};
  for (auto& d : dots) {
    const double rr = std::sqrt(rng.uniform()) * 0.7;
    const double ph = rng.uniform(0.0, 2 * std::numbers::pi);
    d = {rr * std::cos(ph), rr * std::sin(ph)};
  }

  ImageSample s;
  s.pixels = Image(height, width, 3);
  s.mask.assign(height * width, 0);
  s.label = label;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  s.id = "toy_" + std::string(label_name(label)) + "_" + buf;
  s.provenance = Provenance::kReal;

  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx;
      const double dy = static_cast<double>(y) + 0.5 - cy;
      const double u = (dx * ct + dy * snt) / a;
      const double v = (-dx * snt + dy * ct) / b;
      const double r = std::sqrt(u * u + v * v);
      const double phi = std::atan2(v, u);
      double alpha = 0.0;
      if (r <= 1.0 - st.border_softness) {
        alpha = 1.0;
      } else if (r < 1.0) {
        const double t = (1.0 - r) / std::max(st.border_softness, 1e-6f);
        alpha = t * t * (3 - 2 * t);
      }
      if (r <= 1.0) s.mask[y * width + x] = 1;
      const double noise = rng.normal(0.0, 0.015);
      const double speckle = rng.normal(0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        double lesion = color[c];
        switch (st.texture) {
          case 1: lesion += st.texture_strength * speckle; break;
          case 2:
            for (const auto& d : dots) {
              const double du = u - d[0], dv = v - d[1];
              if (du * du + dv * dv < 0.12 * 0.12) lesion *= 1.0 - st.texture_strength;
            }
            break;
          case 3: lesion *= 1.0 - st.texture_strength * std::max(0.0, 1.0 - 1.6 * r) + 0.25 * st.texture_strength * r; break;
          case 4: lesion *= 1.0 + st.texture_strength * 0.8 * (0.5 + 0.5 * std::sin(9 * phi + phase1)); break;
          case 5:
            lesion += st.texture_strength * std::sin(3 * std::numbers::pi * u + phase1) *
                      std::sin(3 * std::numbers::pi * v + phase2);
            break;
          case 6: lesion *= 1.0 - st.texture_strength * (0.5 + 0.5 * std::cos(4 * phi + phase1)) * r; break;
          default: break;
        }
        const double px = (1 - alpha) * (skin[c] + noise) + alpha * lesion;
        s.pixels.at(y, x, c) = static_cast<float>(std::clamp(px, 0.0, 1.0));
      }
    }
  }
  return s;
}

}  // namespace

Dataset synth_toy_dataset(const ToyDatasetOptions& options) {
  if (options.height < 16 || options.width < 16) throw DatasetError("toy images must be at least 16x16");
  Dataset out;
  const Rng root(options.seed);
  for (std::size_t label = 0; label < kNumClasses; ++label) {
    auto it = options.per_class.find(std::string(kClassNames[label]));
    if (it == options.per_class.end()) continue;
    for (std::size_t i = 0; i < it->second; ++i) {
      out.push_back(render_toy_lesion(static_cast<int>(label), i, options.height, options.width,
                                      root.split(label).split(i)));
    }
  }
  for (const auto& [name, n] : options.per_class) {
    if (!label_from_name(name)) throw DatasetError("unknown lesion class '" + name + "'");
  }
  return out;
}

SplitResult split(const Dataset& dataset, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw DatasetError("val_fraction must lie in (0, 1)");
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class.at(static_cast<std::size_t>(dataset[i].label)).push_back(i);
  std::vector<bool> to_val(dataset.size(), false);
  SplitResult result;
  const Rng root(seed);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < 2) {
      result.warnings.push_back("class " + std::string(kClassNames[c]) + " has " + std::to_string(idx.size()) +
                                " sample(s); kept in train only");
      continue;
    }
    Rng rng = root.split(c);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * val_fraction));
    for (std::size_t i = 0; i < n_val; ++i) to_val[idx[i]] = true;
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) (to_val[i] ? result.val : result.train).push_back(dataset[i]);
  return result;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  std::ofstream manifest(root / "manifest.csv", std::ios::trunc);
  if (!manifest) throw DatasetError("cannot write manifest in '" + root.string() + "'");
  manifest << "id,label,provenance\n";
  for (const auto& s : dataset) {
    const auto label_dir = root / std::string(label_name(s.label));
    fs::create_directories(label_dir);
    write_png(label_dir / (s.id + ".png"), s.pixels);
    if (!s.mask.empty()) {
      fs::create_directories(root / "masks");
      Image m(s.pixels.height, s.pixels.width, 1);
      for (std::size_t i = 0; i < s.mask.size(); ++i) m.pixels[i] = s.mask[i] ? 1.0f : 0.0f;
      write_png(root / "masks" / (s.id + ".png"), m);
    }
    manifest << s.id << ',' << label_name(s.label) << ',' << provenance_name(s.provenance) << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& root) {
  const CsvTable table = read_csv(root / "manifest.csv");
  const int id_col = table.column("id"), label_col = table.column("label"), prov_col = table.column("provenance");
  if (id_col < 0 || label_col < 0) throw DatasetError("manifest in '" + root.string() + "' lacks id/label columns");
  Dataset out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    ImageSample s;
    s.id = row.at(static_cast<std::size_t>(id_col));
    const std::string& name = row.at(static_cast<std::size_t>(label_col));
    auto label = label_from_name(name);
    if (!label) throw DatasetError("unknown label '" + name + "' in manifest row " + std::to_string(r + 2));
    s.label = *label;
    s.provenance = prov_col >= 0 && row.at(static_cast<std::size_t>(prov_col)) == "synthetic" ? Provenance::kSynthetic
                                                                                             : Provenance::kReal;
    const auto file = root / name / (s.id + ".png");
    if (!std::filesystem::exists(file)) throw DatasetError("missing image file for id " + s.id);
    s.pixels = read_png(file);
    const auto mask_file = root / "masks" / (s.id + ".png");
    if (std::filesystem::exists(mask_file)) {
      const Image m = read_png(mask_file);
      s.mask.resize(m.height * m.width);
      for (std::size_t i = 0; i < s.mask.size(); ++i) s.mask[i] = m.pixels[i * 3] > 0.5f ? 1 : 0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lesionaid
