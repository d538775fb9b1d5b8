#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "panet/errors.hpp"
#include "panet/model/network.hpp"
#include "panet/model/params.hpp"
#include "panet/rng.hpp"
#include "panet/shapegen/dataset.hpp"
#include "panet/train/adamw.hpp"
#include "panet/train/config.hpp"
#include "panet/train/metrics.hpp"

namespace panet {

struct EpochResult {
  double mean_loss = 0.0;
  Metrics train_metrics;  // from the (augmented) training forward passes
};

inline ForwardOptions train_forward_options(const TrainConfig& cfg, std::size_t epoch, std::size_t sample) {
  ForwardOptions opt;
  opt.train_mode = cfg.augment;
  opt.augment_seed = derive_seed(cfg.seed, {0xe90c, epoch, sample});
  opt.flip_prob = cfg.flip_prob;
  opt.erase_prob = cfg.erase_prob;
  opt.loss = {cfg.gamma, cfg.smoothing};
  return opt;
}

/// One pass over the dataset in a seeded order. Views per object vary, so a
/// batch is formed by accumulating per-sample gradients and averaging them
/// before a single optimizer step.
inline EpochResult train_epoch(ModelParams& params, const Dataset& data, const TrainConfig& cfg,
                               AdamState& state, std::size_t epoch) {
  if (data.samples.empty()) throw UsageError("train_epoch: empty dataset");
  cfg.validate_objective();
  const std::uint32_t k = params.config().num_classes;

  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, {0x5f1e, epoch}));
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<std::uint32_t> labels, preds;
  labels.reserve(order.size());
  preds.reserve(order.size());
  double loss_sum = 0.0;

  std::vector<std::vector<double>> accum(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) accum[i].assign(params[i].numel(), 0.0);
  std::size_t in_batch = 0;

  auto flush = [&]() {
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    const double inv = 1.0 / static_cast<double>(in_batch);
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::vector<double> g(accum[i].size());
      for (std::size_t j = 0; j < g.size(); ++j) g[j] = accum[i][j] * inv;
      std::fill(accum[i].begin(), accum[i].end(), 0.0);
      grads.emplace_back(params[i].shape(), std::move(g));
    }
    adamw_step(params.mutable_tensors(), grads, state, cfg.optimizer);
    in_batch = 0;
  };

  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t idx = order[pos];
    const MultiViewSample& sample = data.samples[idx];
    if (sample.label >= k) throw UsageError("train_epoch: sample " + std::to_string(idx) + " label outside [0, K)");
    ForwardBackwardResult r;
    try {
      r = forward_backward(params, sample, train_forward_options(cfg, epoch, idx));
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ", sample " + std::to_string(idx) + ": " + e.what());
    }
    if (!std::isfinite(r.output.loss))
      throw NumericError("epoch " + std::to_string(epoch) + ", sample " + std::to_string(idx) + ": non-finite loss");
    loss_sum += r.output.loss;
    labels.push_back(sample.label);
    preds.push_back(argmax(r.output.probs.data()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto g = r.grads[i].data();
      for (std::size_t j = 0; j < g.size(); ++j) accum[i][j] += g[j];
    }
    if (++in_batch == cfg.batch_size) flush();
  }
  if (in_batch > 0) flush();

  EpochResult out;
  out.mean_loss = loss_sum / static_cast<double>(order.size());
  out.train_metrics = metrics_from_predictions(labels, preds, k);
  return out;
}

struct EvalOptions {
  std::size_t max_views = 0;  // use only the first max_views views; 0 = all
};

inline std::vector<std::uint32_t> predict(const ModelParams& params, const Dataset& data,
                                          const EvalOptions& opt = {}) {
  std::vector<std::uint32_t> preds;
  preds.reserve(data.samples.size());
  ForwardOptions fo;
  fo.max_views = opt.max_views;
  for (const MultiViewSample& s : data.samples) preds.push_back(argmax(forward(params, s, fo).probs.data()));
  return preds;
}

/// Eval-mode (no augmentation) accuracy on a dataset.
inline Metrics evaluate(const ModelParams& params, const Dataset& data, const EvalOptions& opt = {}) {
  if (data.num_classes != params.config().num_classes)
    throw UsageError("evaluate: dataset has " + std::to_string(data.num_classes) + " classes, model " +
                     std::to_string(params.config().num_classes));
  std::vector<std::uint32_t> labels;
  labels.reserve(data.samples.size());
  for (const auto& s : data.samples) labels.push_back(s.label);
  return metrics_from_predictions(labels, predict(params, data, opt), data.num_classes);
}

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_inst_acc = 0.0;
  double val_inst_acc = 0.0;
  double val_class_acc = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&, const ModelParams&, const AdamState&)>;

/// Runs cfg.epochs epochs from the given state. When a validation split is
/// supplied it is evaluated after every epoch.
inline std::vector<EpochLog> train(ModelParams& params, AdamState& state, const Dataset& train_data,
                                   const Dataset* val_data, const TrainConfig& cfg, std::size_t first_epoch = 0,
                                   const EpochCallback& on_epoch = {}) {
  std::vector<EpochLog> logs;
  for (std::size_t e = first_epoch; e < first_epoch + cfg.epochs; ++e) {
    const EpochResult r = train_epoch(params, train_data, cfg, state, e);
    EpochLog log;
    log.epoch = e + 1;
    log.mean_loss = r.mean_loss;
    log.train_inst_acc = r.train_metrics.per_instance_acc;
    if (val_data) {
      const Metrics m = evaluate(params, *val_data);
      log.val_inst_acc = m.per_instance_acc;
      log.val_class_acc = m.per_class_acc;
    }
    logs.push_back(log);
    if (on_epoch) on_epoch(log, params, state);
  }
  return logs;
}

struct ExperimentResult {
  ModelParams params;
  Metrics test;
  std::vector<EpochLog> logs;
  double wall_seconds = 0.0;  // training only
};

inline std::uint64_t split_seed(std::uint64_t seed, bool test) { return derive_seed(seed, {0xda7a, test ? 1u : 0u}); }

/// Generates the train/test splits for `seed`, trains from a fresh
/// initialization and evaluates on the held-out split.
inline ExperimentResult run_experiment(const ModelConfig& model_cfg, TrainConfig train_cfg, const DataConfig& data_cfg,
                                       std::uint64_t seed) {
  train_cfg.seed = seed;
  const Dataset train_data = build_dataset(data_cfg.split(data_cfg.train_per_class, split_seed(seed, false)));
  const Dataset test_data = build_dataset(data_cfg.split(data_cfg.test_per_class, split_seed(seed, true)));
  ExperimentResult out;
  out.params = ModelParams::initialize(model_cfg, derive_seed(seed, {0x1417}));
  AdamState state = AdamState::zeros_like(out.params.tensors());
  const auto t0 = std::chrono::steady_clock::now();
  out.logs = train(out.params, state, train_data, nullptr, train_cfg);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.test = evaluate(out.params, test_data);
  return out;
}

}  // namespace panet
