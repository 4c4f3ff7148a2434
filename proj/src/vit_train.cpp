// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "lesionaid/csv.hpp"
#include "lesionaid/vit.hpp"

namespace lesionaid {

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DatasetError("cannot write report '" + path.string() + "'");
  os << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << format_number(e.train_loss) << ',' << format_number(e.train_acc) << ',';
    if (e.has_val) os << format_number(e.val_loss) << ',' << format_number(e.val_acc);
    else os << ',';
    os << '\n';
  }
}

TrainReport TrainReport::read_csv(const std::filesystem::path& path) {
  const CsvTable t = lesionaid::read_csv(path);
  const int ep = t.column("epoch"), tl = t.column("train_loss"), ta = t.column("train_acc");
  const int vl = t.column("val_loss"), va = t.column("val_acc");
  if (ep < 0 || tl < 0 || ta < 0) throw DatasetError("report '" + path.string() + "' lacks epoch/train columns");
  TrainReport r;
  auto num = [](const std::vector<std::string>& row, int col, double& out) {
    if (col < 0 || static_cast<std::size_t>(col) >= row.size() || row[static_cast<std::size_t>(col)].empty()) {
      return false;
    }
    out = std::stod(row[static_cast<std::size_t>(col)]);
    return true;
  };
  for (const auto& row : t.rows) {
    EpochStats e;
    double epoch = 0;
    num(row, ep, epoch);
    e.epoch = static_cast<std::size_t>(epoch);
    num(row, tl, e.train_loss);
    num(row, ta, e.train_acc);
    e.has_val = num(row, vl, e.val_loss) && num(row, va, e.val_acc);
    r.epochs.push_back(e);
  }
  return r;
}

EvalResult evaluate(const VitParams<float>& params, const Dataset& dataset, std::size_t batch_size) {
  NoGradGuard no_grad;
  EvalResult r;
  if (dataset.empty()) return r;
  const std::size_t classes = params.config.num_classes;
  double loss_sum = 0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    const std::size_t end = std::min(dataset.size(), start + batch_size);
    std::vector<const Image*> chunk;
    std::vector<int> labels;
    for (std::size_t i = start; i < end; ++i) {
      chunk.push_back(&dataset[i].pixels);
      labels.push_back(dataset[i].label);
    }
    auto logits = vit_forward(params, patchify_batch<float>(chunk, params.config.patch));
    loss_sum += static_cast<double>(cross_entropy(logits, std::span<const int>(labels)).item()) *
                static_cast<double>(chunk.size());
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto row = logits.data().subspan(i * classes, classes);
      if (std::max_element(row.begin(), row.end()) - row.begin() == labels[i]) ++correct;
    }
  }
  r.loss = loss_sum / static_cast<double>(dataset.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  return r;
}

namespace {

VitParams<float> copy_params(const VitParams<float>& src) {
  VitParams<float> dst = VitParams<float>::init(src.config, 0);
  auto from = src.named_parameters();
  auto to = dst.named_parameters();
  for (std::size_t i = 0; i < from.size(); ++i) {
    std::copy(from[i].second.data().begin(), from[i].second.data().end(), to[i].second.mutable_data().begin());
  }
  return dst;
}

}  // namespace

std::pair<VitParams<float>, TrainReport> train_classifier(const Dataset& train, const Dataset& val,
                                                          const VitConfig& config, const VitTrainOptions& options) {
  if (train.empty()) throw DatasetError("train_classifier: empty training set");
  for (const auto& s : train) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= config.num_classes) {
      throw DatasetError("train_classifier: label of " + s.id + " outside the class set");
    }
  }
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (options.augment) options.augment_config.validate();

  const Rng root(options.seed);
  VitParams<float> params = VitParams<float>::init(config, root.split(1).next_u64());
  Adam<float> adam(params.parameters(), options.adam);
  VitParams<float> last_good = copy_params(params);
  TrainReport report;

  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = root.split(2).split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    Rng dropout_rng = root.split(3).split(epoch);
    const std::uint64_t augment_seed = root.split(4).next_u64();

    try {
      for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
        const std::size_t end = std::min(order.size(), start + options.batch_size);
        std::vector<ImageSample> batch;
        std::vector<int> labels;
        for (std::size_t i = start; i < end; ++i) {
          const ImageSample& s = train[order[i]];
          batch.push_back(options.augment ? augment_for_epoch(s, options.augment_config, augment_seed, epoch) : s);
          labels.push_back(s.label);
        }
        std::vector<const Image*> images;
        for (const auto& s : batch) images.push_back(&s.pixels);
        adam.zero_grad();
        auto logits = vit_forward<float>(params, patchify_batch<float>(images, config.patch), nullptr,
                                  config.dropout > 0 ? &dropout_rng : nullptr);
        auto loss = cross_entropy(logits, std::span<const int>(labels));
        loss.backward();
        adam.step();
      }
      EpochStats stats;
      stats.epoch = epoch;
      const EvalResult tr = evaluate(params, train);
      stats.train_loss = tr.loss;
      stats.train_acc = tr.accuracy;
      if (!val.empty()) {
        const EvalResult va = evaluate(params, val);
        stats.val_loss = va.loss;
        stats.val_acc = va.accuracy;
        stats.has_val = true;
      }
      if (!std::isfinite(stats.train_loss)) throw NumericalError("non-finite training loss");
      stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      report.epochs.push_back(stats);
      if (options.on_epoch) options.on_epoch(stats);
      last_good = copy_params(params);
    } catch (const NumericalError& e) {
      if (options.abort_checkpoint) {
        Checkpoint ck;
        save_vit(ck, last_good);
        ck.save(*options.abort_checkpoint);
      }
      throw TrainingDiverged("classifier training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
    }
  }
  return {std::move(params), std::move(report)};
}

}  // namespace lesionaid
