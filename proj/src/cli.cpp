// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "lesionaid/augment.hpp"
#include "lesionaid/csv.hpp"
#include "lesionaid/eval.hpp"
#include "lesionaid/gradcam.hpp"
#include "lesionaid/report.hpp"
#include "lesionaid/vit.hpp"
#include "lesionaid/vitgan.hpp"

namespace lesionaid {

namespace {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Options of one subcommand. Each flag maps to a "section.key" entry of the
// config file; a flag given on the command line wins over the file, which
// wins over the default.
class Params {
 public:
  explicit Params(CLI::App* app) : app_(app) {}

  void add(const std::string& flag, const std::string& key, std::string def, const std::string& help,
           bool required = false) {
    auto entry = std::make_unique<Entry>();
    entry->key = key;
    entry->def = std::move(def);
    entry->required = required;
    std::string text = help + " [" + key + "]";
    if (!entry->def.empty()) text += " (default " + entry->def + ")";
    entry->option = app_->add_option(flag, entry->cli, text);
    entries_.push_back(std::move(entry));
  }

  void resolve(const std::string& command, const pt::ptree& file) {
    resolved_ = pt::ptree();
    resolved_.put("run.command", command);
    for (const auto& e : entries_) {
      std::string value = e->def;
      bool have = !value.empty();
      if (e->option->count() > 0) {
        value = e->cli;
        have = true;
      } else if (auto v = file.get_optional<std::string>(e->key)) {
        value = *v;
        have = true;
      }
      if (!have && e->required) {
        throw UsageError("missing " + e->option->get_name() + " (or " + e->key + " in the config file)");
      }
      resolved_.put(e->key, value);
    }
  }

  std::string str(const std::string& key) const { return resolved_.get<std::string>(key, ""); }

  template <typename T>
  T get(const std::string& key) const {
    const std::string s = str(key);
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw UsageError("bad value '" + s + "' for " + key);
    return v;
  }

  bool flag(const std::string& key) const {
    std::string s = str(key);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw UsageError("bad boolean '" + s + "' for " + key);
  }

  // The resolved config is itself a valid config file: `<command> --config
  // run.txt` replays the run.
  void write_run_file(const fs::path& dir) const {
    fs::create_directories(dir);
    pt::write_ini((dir / "run.txt").string(), resolved_);
  }

 private:
  struct Entry {
    std::string key, def, cli;
    bool required = false;
    CLI::Option* option = nullptr;
  };
  CLI::App* app_;
  std::vector<std::unique_ptr<Entry>> entries_;
  pt::ptree resolved_;
};

std::string format_fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string histogram_line(const ClassHistogram& h) {
  std::string s;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (h.counts[c] == 0) continue;
    if (!s.empty()) s += ' ';
    s += std::string(kClassNames[c]) + '=' + std::to_string(h.counts[c]);
  }
  char ratio[32];
  std::snprintf(ratio, sizeof ratio, "%.3f", h.imbalance_ratio());
  return s + " ratio=" + ratio;
}

std::map<std::string, std::size_t> parse_per_class(const std::string& spec) {
  std::map<std::string, std::size_t> out;
  for (const auto& item : split_csv_line(spec)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("per-class entry '" + item + "' is not name=count");
    const std::string name = item.substr(0, eq);
    std::size_t count = 0;
    const std::string num = item.substr(eq + 1);
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), count);
    if (ec != std::errc() || ptr != num.data() + num.size()) throw UsageError("bad count in '" + item + "'");
    if (name == "all") {
      for (auto n : kClassNames) out[std::string(n)] = count;
    } else {
      if (!label_from_name(name)) throw UsageError("unknown class '" + name + "'");
      out[name] = count;
    }
  }
  return out;
}

int parse_label(const std::string& name) {
  if (auto l = label_from_name(name)) return *l;
  throw UsageError("unknown class '" + name + "'");
}

// A dataset directory (with manifest.csv) or any directory of PNG/JPEG
// files, read in sorted path order.
std::vector<Image> load_images(const fs::path& dir) {
  std::vector<Image> out;
  if (fs::exists(dir / "manifest.csv")) {
    for (auto& s : load_dataset(dir)) out.push_back(std::move(s.pixels));
    return out;
  }
  if (!fs::is_directory(dir)) throw DatasetError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(read_image(f));
  return out;
}

void add_augment_options(Params& p) {
  const AugmentConfig t = AugmentConfig::table_one();
  p.add("--normalize", "augment.normalize", t.normalize ? "true" : "false", "clamp outputs to [0,1]");
  p.add("--flip-horizontal", "augment.flip_horizontal", t.flip_horizontal ? "true" : "false", "random H flips");
  p.add("--flip-vertical", "augment.flip_vertical", t.flip_vertical ? "true" : "false", "random V flips");
  p.add("--rotation-factor", "augment.rotation_factor", format_number(t.rotation_factor), "fraction of a turn");
  p.add("--zoom-factor", "augment.zoom_factor", format_number(t.zoom_factor), "zoom range half-width");
  p.add("--brightness-lo", "augment.brightness_lo", format_number(t.brightness_lo), "brightness delta low");
  p.add("--brightness-hi", "augment.brightness_hi", format_number(t.brightness_hi), "brightness delta high");
}

AugmentConfig augment_config(const Params& p) {
  AugmentConfig c;
  c.normalize = p.flag("augment.normalize");
  c.flip_horizontal = p.flag("augment.flip_horizontal");
  c.flip_vertical = p.flag("augment.flip_vertical");
  c.rotation_factor = p.get<double>("augment.rotation_factor");
  c.zoom_factor = p.get<double>("augment.zoom_factor");
  c.brightness_lo = p.get<double>("augment.brightness_lo");
  c.brightness_hi = p.get<double>("augment.brightness_hi");
  c.seed = p.get<std::uint64_t>("run.seed");
  c.validate();
  return c;
}

void add_gan_options(Params& p) {
  const GanConfig d;
  auto s = [](std::size_t v) { return std::to_string(v); };
  p.add("--latent-dim", "gan.latent_dim", s(d.latent_dim), "latent vector length");
  p.add("--conditional", "gan.conditional", d.conditional ? "true" : "false", "class-conditional generator");
  p.add("--disc-patch", "gan.disc_patch", s(d.disc_patch), "discriminator patch size M");
  p.add("--overlap", "gan.overlap", s(d.overlap), "discriminator patch overlap o");
  p.add("--disc-dim", "gan.disc_dim", s(d.disc_dim), "discriminator width");
  p.add("--disc-layers", "gan.disc_layers", s(d.disc_layers), "discriminator encoder layers");
  p.add("--disc-heads", "gan.disc_heads", s(d.disc_heads), "discriminator heads");
  p.add("--disc-head-dim", "gan.disc_head_dim", s(d.disc_head_dim), "discriminator head dim");
  p.add("--disc-mlp", "gan.disc_mlp", s(d.disc_mlp), "discriminator MLP width");
  p.add("--token-grid", "gan.token_grid", s(d.token_grid), "generator token grid side");
  p.add("--gen-dim", "gan.gen_dim", s(d.gen_dim), "generator width");
  p.add("--gen-layers", "gan.gen_layers", s(d.gen_layers), "generator transformer blocks");
  p.add("--gen-heads", "gan.gen_heads", s(d.gen_heads), "generator heads");
  p.add("--gen-head-dim", "gan.gen_head_dim", s(d.gen_head_dim), "generator head dim");
  p.add("--gen-mlp", "gan.gen_mlp", s(d.gen_mlp), "generator MLP width");
}

GanConfig gan_config(const Params& p, std::size_t image_size) {
  GanConfig c;
  c.image_size = image_size;
  c.latent_dim = p.get<std::size_t>("gan.latent_dim");
  c.conditional = p.flag("gan.conditional");
  c.disc_patch = p.get<std::size_t>("gan.disc_patch");
  c.overlap = p.get<std::size_t>("gan.overlap");
  c.disc_dim = p.get<std::size_t>("gan.disc_dim");
  c.disc_layers = p.get<std::size_t>("gan.disc_layers");
  c.disc_heads = p.get<std::size_t>("gan.disc_heads");
  c.disc_head_dim = p.get<std::size_t>("gan.disc_head_dim");
  c.disc_mlp = p.get<std::size_t>("gan.disc_mlp");
  c.token_grid = p.get<std::size_t>("gan.token_grid");
  c.gen_dim = p.get<std::size_t>("gan.gen_dim");
  c.gen_layers = p.get<std::size_t>("gan.gen_layers");
  c.gen_heads = p.get<std::size_t>("gan.gen_heads");
  c.gen_head_dim = p.get<std::size_t>("gan.gen_head_dim");
  c.gen_mlp = p.get<std::size_t>("gan.gen_mlp");
  c.validate();
  return c;
}

void add_vit_options(Params& p) {
  const VitConfig d;
  auto s = [](std::size_t v) { return std::to_string(v); };
  p.add("--patch", "vit.patch", s(d.patch), "patch size P");
  p.add("--embed-dim", "vit.embed_dim", s(d.embed_dim), "token width D");
  p.add("--layers", "vit.layers", s(d.layers), "encoder layers L");
  p.add("--heads", "vit.heads", s(d.heads), "attention heads h");
  p.add("--head-dim", "vit.head_dim", s(d.head_dim), "head dim d_k");
  p.add("--mlp-hidden", "vit.mlp_hidden", s(d.mlp_hidden), "MLP hidden width");
  p.add("--dropout", "vit.dropout", format_number(d.dropout), "dropout rate");
}

VitConfig vit_config(const Params& p, const Image& like) {
  VitConfig c;
  c.image_height = like.height;
  c.image_width = like.width;
  c.channels = like.channels;
  c.patch = p.get<std::size_t>("vit.patch");
  c.embed_dim = p.get<std::size_t>("vit.embed_dim");
  c.layers = p.get<std::size_t>("vit.layers");
  c.heads = p.get<std::size_t>("vit.heads");
  c.head_dim = p.get<std::size_t>("vit.head_dim");
  c.mlp_hidden = p.get<std::size_t>("vit.mlp_hidden");
  c.dropout = p.get<double>("vit.dropout");
  c.validate();
  return c;
}

Dataset require_data(const fs::path& dir) {
  Dataset d = load_dataset(dir);
  if (d.empty()) throw DatasetError("dataset '" + dir.string() + "' is empty");
  return d;
}

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::unique_ptr<Params> params;
  std::function<void(const Params&, std::ostream&, std::ostream&)> run;
  bool has_out = true;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Skin-lesion classification with transformer GAN balancing", "lesionaid"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<Command> commands;

  auto command = [&](const std::string& name, const std::string& help) -> Command& {
    Command c;
    c.name = name;
    c.app = app.add_subcommand(name, help);
    c.app->add_option("--config", config_path, "INI config file; flags override its keys");
    c.params = std::make_unique<Params>(c.app);
    c.params->add("--seed", "run.seed", "0", "seed for all randomness");
    commands.push_back(std::move(c));
    return commands.back();
  };

  {
    auto& c = command("synth-data", "generate the synthetic toy-lesion dataset");
    c.params->add("--out", "run.out", "", "output dataset directory", true);
    c.params->add("--per-class", "data.per_class", "all=200", "counts as name=count,...; 'all' sets every class");
    c.params->add("--size", "data.size", "64", "image side");
    c.run = [](const Params& p, std::ostream& o, std::ostream&) {
      ToyDatasetOptions opt;
      opt.per_class = parse_per_class(p.str("data.per_class"));
      opt.height = opt.width = p.get<std::size_t>("data.size");
      opt.seed = p.get<std::uint64_t>("run.seed");
      const Dataset d = synth_toy_dataset(opt);
      save_dataset(d, p.str("run.out"));
      o << "wrote " << d.size() << " images: " << histogram_line(class_histogram(d)) << '\n';
    };
  }
  {
    auto& c = command("ingest", "import an image directory with image_id,dx metadata");
    c.params->add("--images", "data.images", "", "image directory", true);
    c.params->add("--metadata", "data.metadata", "", "metadata CSV", true);
    c.params->add("--size", "data.size", "64", "target image side");
    c.params->add("--out", "run.out", "", "output dataset directory", true);
    c.run = [](const Params& p, std::ostream& o, std::ostream&) {
      const std::size_t s = p.get<std::size_t>("data.size");
      const Dataset d = ingest(p.str("data.images"), p.str("data.metadata"), s, s);
      save_dataset(d, p.str("run.out"));
      o << "ingested " << d.size() << " images: " << histogram_line(class_histogram(d)) << '\n';
    };
  }
  {
    auto& c = command("augment", "write one augmented variant of every sample");
    c.params->add("--data", "data.dir", "", "input dataset directory", true);
    c.params->add("--out", "run.out", "", "output dataset directory", true);
    c.params->add("--epoch", "augment.epoch", "1", "epoch index keying the variants");
    add_augment_options(*c.params);
    c.run = [](const Params& p, std::ostream& o, std::ostream&) {
      const AugmentConfig cfg = augment_config(p);
      const Dataset d = augment_epoch(require_data(p.str("data.dir")), cfg, cfg.seed, p.get<std::size_t>("augment.epoch"));
      save_dataset(d, p.str("run.out"));
      o << "augmented " << d.size() << " images\n";
    };
  }
  {
    auto& c = command("train-gan", "train the transformer GAN");
    c.params->add("--data", "data.dir", "", "training dataset directory", true);
    c.params->add("--out", "run.out", "", "output directory (gan.bin, gan_log.csv)", true);
    c.params->add("--steps", "gan.steps", "500", "training steps");
    c.params->add("--batch", "gan.batch", "32", "batch size");
    c.params->add("--frozen-steps", "gan.frozen_steps", "0", "initial discriminator-only steps");
    add_gan_options(*c.params);
    c.run = [](const Params& p, std::ostream& o, std::ostream&) {
      const Dataset d = require_data(p.str("data.dir"));
      if (d[0].pixels.height != d[0].pixels.width) throw ShapeError("GAN training needs square images");
      const GanConfig cfg = gan_config(p, d[0].pixels.height);
      const fs::path dir = p.str("run.out");
      GanTrainOptions opt;
      opt.steps = p.get<std::size_t>("gan.steps");
      opt.batch_size = p.get<std::size_t>("gan.batch");
      opt.frozen_generator_steps = p.get<std::size_t>("gan.frozen_steps");
      opt.seed = p.get<std::uint64_t>("run.seed");
      opt.abort_checkpoint = dir / "gan_abort.bin";
      opt.on_step = [&o, &opt](const GanState& s, const GanStepResult& r) {
        if (s.step % 50 == 0 || s.step == opt.steps) {
          o << "step " << s.step << " d_loss=" << format_fixed(r.d_loss) << " g_loss=" << format_fixed(r.g_loss)
            << " d_acc=" << format_fixed(r.d_accuracy) << '\n';
        }
      };
      auto [state, report] = train_gan(d, cfg, opt);
      Checkpoint ck;
      state.save(ck);
      ck.save(dir / "gan.bin");
      report.write_csv(dir / "gan_log.csv");
      o << "wrote " << (dir / "gan.bin").string() << '\n';
    };
  }
  {
    auto& c = command("generate", "sample synthetic images of one class");
    c.params->add("--ckpt", "gan.ckpt", "", "GAN checkpoint", true);
    c.params->add("--label", "generate.label", "", "class name", true);
    c.params->add("--count", "generate.count", "", "number of images", true);
    c.params->add("--out", "run.out", "", "output dataset directory", true);
    c.run = [](const Params& p, std::ostream& o, std::ostream&) {
      GanState state = GanState::load(Checkpoint::load(p.str("gan.ckpt")));
      const int label = parse_label(p.str("generate.label"));
      auto images = sample_images(state, state.config.conditional ? label : 0, p.get<std::size_t>("generate.count"),
                                  p.get<std::uint64_t>("run.seed"));
      Dataset d;
      for (std::size_t i = 0; i < images.size(); ++i) {
        ImageSample s;
        s.pixels = std::move(images[i]);
        s.label = label;
        char id[64];
        std::snprintf(id, sizeof id, "syn_%s_%06zu", std::string(label_name(label)).c_str(), i);
        s.id = id;
        s.provenance = Provenance::kSynthetic;
        d.push_back(std::move(s));
      }
      save_dataset(d, p.str("run.out"));
      o << "generated " << d.size() << " " << label_name(label) << " images\n";
    };
  }
  {
    auto& c = command("balance", "fill every class up to the largest with synthetic images");
    c.params->add("--data", "data.dir", "", "real dataset directory", true);
    c.params->add("--ckpt", "gan.ckpt", "", "GAN checkpoint", true);
    c.params->add("--out", "run.out", "", "merged dataset directory", true);
    c.run = [](const Params& p, std::ostream& o, std::ostream&) {
      const Dataset real = require_data(p.str("data.dir"));
      GanState state = GanState::load(Checkpoint::load(p.str("gan.ckpt")));
      const ClassHistogram before = class_histogram(real);
      const Dataset synthetic = synthesize_for_balance(state, before, p.get<std::uint64_t>("run.seed"));
      const Dataset merged = balance_merge(real, synthetic);
      save_dataset(merged, p.str("run.out"));
      o << "before: " << histogram_line(before) << '\n';
      o << "after:  " << histogram_line(class_histogram(merged)) << " (" << synthetic.size() << " synthetic)\n";
    };
  }
  {
    auto& c = command("train-vit", "train the ViT classifier");
    c.params->add("--data", "data.dir", "", "training dataset directory", true);
    c.params->add("--val", "data.val", "", "validation dataset directory (else split from --data)");
    c.params->add("--val-fraction", "data.val_fraction", "0.2", "held-out fraction when --val is not given");
    c.params->add("--out", "run.out", "", "output directory (vit.bin, train_report.csv)", true);
    c.params->add("--epochs", "train.epochs", "25", "epochs");
    c.params->add("--batch", "train.batch", "32", "batch size");
    c.params->add("--lr", "train.lr", format_number(kClassifierAdam.lr), "Adam learning rate");
    c.params->add("--augment", "train.augment", "true", "apply the augmentation pipeline to training batches");
    add_vit_options(*c.params);
    add_augment_options(*c.params);
    c.run = [](const Params& p, std::ostream& o, std::ostream& e) {
      Dataset train = require_data(p.str("data.dir"));
      Dataset val;
      const std::uint64_t seed = p.get<std::uint64_t>("run.seed");
      if (!p.str("data.val").empty()) {
        val = require_data(p.str("data.val"));
      } else {
        auto sp = split(train, p.get<double>("data.val_fraction"), seed);
        for (const auto& w : sp.warnings) e << "warning: " << w << '\n';
        train = std::move(sp.train);
        val = std::move(sp.val);
      }
      const VitConfig cfg = vit_config(p, train[0].pixels);
      VitTrainOptions opt;
      opt.epochs = p.get<std::size_t>("train.epochs");
      opt.batch_size = p.get<std::size_t>("train.batch");
      opt.adam.lr = p.get<double>("train.lr");
      opt.seed = seed;
      opt.augment = p.flag("train.augment");
      opt.augment_config = augment_config(p);
      const fs::path dir = p.str("run.out");
      opt.abort_checkpoint = dir / "vit_abort.bin";
      opt.on_epoch = [&o](const EpochStats& s) {
        o << "epoch " << s.epoch << " train_loss=" << format_fixed(s.train_loss) << " train_acc="
          << format_fixed(s.train_acc);
        if (s.has_val) o << " val_loss=" << format_fixed(s.val_loss) << " val_acc=" << format_fixed(s.val_acc);
        o << '\n';
      };
      auto [params, report] = train_classifier(train, val, cfg, opt);
      Checkpoint ck;
      save_vit(ck, params);
      ck.save(dir / "vit.bin");
      report.write_csv(dir / "train_report.csv");
      render_training_curves(report, dir / "train_report_curves.png");
      write_confusion_csv(dir / "confusion.csv", confusion_matrix(params, val.empty() ? train : val));
      o << "wrote " << (dir / "vit.bin").string() << '\n';
    };
  }
  {
    auto& c = command("classify", "classify one image");
    c.params->add("--ckpt", "vit.ckpt", "", "classifier checkpoint", true);
    c.params->add("--image", "data.image", "", "image file", true);
    c.params->add("--out", "run.out", ".", "directory for run.txt");
    c.run = [](const Params& p, std::ostream& o, std::ostream&) {
      const VitParams<float> params = load_vit(Checkpoint::load(p.str("vit.ckpt")));
      const auto probs = classify(params, read_image(p.str("data.image")));
      const auto best = std::max_element(probs.begin(), probs.end()) - probs.begin();
      o << "label=" << label_name(static_cast<int>(best)) << " probs=";
      for (std::size_t i = 0; i < probs.size(); ++i) o << (i ? "," : "") << format_fixed(probs[i]);
      o << '\n';
    };
  }
  {
    auto& c = command("explain", "GradCAM heatmap for one image");
    c.params->add("--ckpt", "vit.ckpt", "", "classifier checkpoint", true);
    c.params->add("--image", "data.image", "", "image file", true);
    c.params->add("--class", "explain.class", "", "target class (default: predicted)");
    c.params->add("--out", "run.out", "", "output directory", true);
    c.run = [](const Params& p, std::ostream& o, std::ostream& e) {
      const VitParams<float> params = load_vit(Checkpoint::load(p.str("vit.ckpt")));
      const Image image = read_image(p.str("data.image"));
      int target;
      if (p.str("explain.class").empty()) {
        const auto probs = classify(params, image);
        target = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      } else {
        target = parse_label(p.str("explain.class"));
      }
      const Heatmap h = gradcam(params, image, target);
      const fs::path dir = p.str("run.out");
      write_heatmap(h, image, dir / "heatmap.png", dir / "overlay.png", dir / "heatmap.csv");
      if (h.degenerate) e << "warning: heatmap is identically zero\n";
      o << "class=" << label_name(target) << " degenerate=" << (h.degenerate ? 1 : 0) << '\n';
    };
  }
  {
    auto& c = command("fid", "Frechet distance between two image sets");
    c.params->add("--real", "fid.real", "", "real image directory", true);
    c.params->add("--fake", "fid.fake", "", "generated image directory", true);
    c.params->add("--features-ckpt", "fid.features_ckpt", "", "classifier checkpoint for ViT features");
    c.params->add("--extractor", "fid.extractor", "", "vit or pixel_pca (default: vit when a checkpoint is given)");
    c.params->add("--out", "run.out", ".", "directory for fid.csv and run.txt");
    c.run = [](const Params& p, std::ostream& o, std::ostream&) {
      const auto real = load_images(p.str("fid.real"));
      const auto fake = load_images(p.str("fid.fake"));
      std::vector<const Image*> rp, fp;
      for (const auto& i : real) rp.push_back(&i);
      for (const auto& i : fake) fp.push_back(&i);
      std::string kind = p.str("fid.extractor");
      if (kind.empty()) kind = p.str("fid.features_ckpt").empty() ? "pixel_pca" : "vit";
      std::optional<VitParams<float>> vit;
      FeatureExtractor ex;
      if (kind == "vit") {
        if (p.str("fid.features_ckpt").empty()) throw UsageError("the vit extractor needs --features-ckpt");
        vit = load_vit(Checkpoint::load(p.str("fid.features_ckpt")));
        ex = vit_extractor(*vit);
      } else if (kind == "pixel_pca") {
        ex = pixel_pca_extractor(rp);
      } else {
        throw UsageError("unknown extractor '" + kind + "'");
      }
      FidRecord r{p.str("fid.real"), p.str("fid.fake"), ex.name, ex.dim, 0.0};
      r.fid = fid(feature_stats(rp, ex), feature_stats(fp, ex));
      const fs::path dir = p.str("run.out");
      write_fid_csv(dir / "fid.csv", r);
      o << "fid=" << format_fixed(r.fid) << " extractor=" << r.extractor << " F=" << r.dim << '\n';
    };
  }
  {
    auto& c = command("report", "render learning curves and a summary for a run directory");
    c.params->add("--run", "report.run", "", "run directory with CSV outputs", true);
    c.params->add("--out", "run.out", "", "output directory (default: the run directory)");
    c.run = [](const Params& p, std::ostream& o, std::ostream& e) {
      const fs::path dir = p.str("run.out").empty() ? fs::path(p.str("report.run")) : fs::path(p.str("run.out"));
      const RunSummary s = report_run(p.str("report.run"), dir);
      for (const auto& w : s.warnings) e << "warning: " << w << '\n';
      o << s.text;
    };
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  for (auto& c : commands) {
    if (!c.app->parsed()) continue;
    try {
      pt::ptree file;
      if (!config_path.empty()) {
        if (!fs::exists(config_path)) throw UsageError("config file '" + config_path + "' not found");
        pt::read_ini(config_path, file);
      }
      c.params->resolve(c.name, file);
      const std::string out_dir = c.params->str("run.out");
      c.params->write_run_file(out_dir.empty() ? fs::path(c.params->str("report.run")) : fs::path(out_dir));
      c.run(*c.params, out, err);
      return kExitOk;
    } catch (const UsageError& e) {
      err << "usage error: " << e.what() << '\n' << c.app->help();
      return kExitUsage;
    } catch (const pt::ptree_error& e) {
      err << "usage error: config: " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitModuleError;
    }
  }
  return kExitUsage;
}

}  // namespace lesionaid
