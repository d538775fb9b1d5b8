#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "panet/errors.hpp"
#include "panet/train/ablation.hpp"
#include "panet/train/checkpoint.hpp"
#include "panet/train/trainer.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace panet;
using panet::testing::random_tensor;
using panet::testing::accuracy_oracle;
using panet::testing::scratch_dir;

namespace {

DataConfig small_data(std::size_t per_class) {
  DataConfig d;
  d.train_per_class = per_class;
  d.test_per_class = per_class;
  d.min_views = 2;
  d.max_views = 4;
  return d;
}

Dataset small_split(std::size_t per_class, std::uint64_t seed) {
  return build_dataset(small_data(per_class).split(per_class, seed));
}

TrainConfig quiet_train() {
  TrainConfig t;
  t.augment = false;
  t.batch_size = 2;
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Optimizer

TEST(AdamW, FirstStepMovesByLearningRate) {
  std::vector<Tensor> p{Tensor::scalar(1.0)};
  std::vector<Tensor> g{Tensor::scalar(2.0)};
  auto s = AdamState::zeros_like(p);
  AdamWConfig c;
  c.learning_rate = 0.1;
  c.weight_decay = 0.0;
  adamw_step(p, g, s, c);
  EXPECT_NEAR(p[0].item(), 0.9, 1e-7);
  EXPECT_EQ(s.step, 1u);
}

TEST(AdamW, ZeroGradientAndDecayIsFixedPoint) {
  std::vector<Tensor> p{random_tensor({3, 4}, 1)};
  const Tensor before = p[0];
  auto s = AdamState::zeros_like(p);
  AdamWConfig c;
  c.weight_decay = 0.0;
  for (int i = 0; i < 5; ++i) adamw_step(p, std::vector<Tensor>{Tensor::zeros({3, 4})}, s, c);
  EXPECT_EQ(p[0], before);
}

TEST(AdamW, DecoupledDecayShrinksByFactor) {
  std::vector<Tensor> p{random_tensor({5}, 2)};
  const Tensor before = p[0];
  auto s = AdamState::zeros_like(p);
  AdamWConfig c;
  c.learning_rate = 0.01;
  c.weight_decay = 0.1;
  adamw_step(p, std::vector<Tensor>{Tensor::zeros({5})}, s, c);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p[0][i], before[i] * (1 - 0.01 * 0.1), 1e-15);
}

TEST(AdamW, MatchesScalarRecurrence) {
  std::vector<Tensor> p{Tensor::scalar(0.3)};
  auto s = AdamState::zeros_like(p);
  AdamWConfig c;
  double theta = 0.3, m = 0.0, v = 0.0;
  for (int t = 1; t <= 20; ++t) {
    const double g = std::sin(t * 0.7) + theta;
    adamw_step(p, std::vector<Tensor>{Tensor::scalar(g)}, s, c);
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g * g;
    const double mh = m / (1 - std::pow(c.beta1, t)), vh = v / (1 - std::pow(c.beta2, t));
    theta = theta - c.learning_rate * mh / (std::sqrt(vh) + c.epsilon) - c.learning_rate * c.weight_decay * theta;
    EXPECT_NEAR(p[0].item(), theta, 1e-14);
  }
}

TEST(AdamW, RejectsMismatchedInputs) {
  std::vector<Tensor> p{Tensor::zeros({2})};
  auto s = AdamState::zeros_like(p);
  EXPECT_THROW(adamw_step(p, std::vector<Tensor>{Tensor::zeros({3})}, s, {}), UsageError);
  EXPECT_THROW(adamw_step(p, std::vector<Tensor>{}, s, {}), UsageError);
}

// ---------------------------------------------------------------------------
// Metrics

TEST(Metrics, HandExample) {
  const std::vector<std::uint32_t> y{0, 0, 0, 1}, p{0, 0, 1, 1};
  const Metrics m = metrics_from_predictions(y, p, 2);
  EXPECT_DOUBLE_EQ(m.per_instance_acc, 0.75);
  EXPECT_NEAR(m.per_class_acc, (2.0 / 3.0 + 1.0) / 2.0, 1e-15);
  EXPECT_EQ(m.confusion[0][1], 1u);
}

TEST(Metrics, MatchesOracleOnRandomSets) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::uint32_t k = 2 + static_cast<std::uint32_t>(rng.below(8));
    const std::size_t n = 1 + rng.below(1000);
    std::vector<std::uint32_t> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<std::uint32_t>(rng.below(k));
      p[i] = rng.uniform() < 0.6 ? y[i] : static_cast<std::uint32_t>(rng.below(k));
    }
    const Metrics m = metrics_from_predictions(y, p, k);
    const auto [inst, cls] = accuracy_oracle(y, p, k);
    EXPECT_NEAR(m.per_instance_acc, inst, 1e-12);
    EXPECT_NEAR(m.per_class_acc, cls, 1e-12);
    EXPECT_EQ(m.confusion, panet::testing::confusion_oracle(y, p, k));
    EXPECT_GE(m.per_instance_acc, 0.0);
    EXPECT_LE(m.per_class_acc, 1.0);
  }
}

TEST(Metrics, BalancedSetsAgreeAndErrorsThrow) {
  const std::vector<std::uint32_t> y{0, 1, 2, 0, 1, 2}, p{0, 2, 2, 1, 1, 2};
  const Metrics m = metrics_from_predictions(y, p, 3);
  EXPECT_NEAR(m.per_instance_acc, m.per_class_acc, 1e-15);
  EXPECT_THROW(metrics_from_predictions(y, std::vector<std::uint32_t>{0}, 3), UsageError);
  EXPECT_THROW(metrics_from_predictions(std::vector<std::uint32_t>{3}, std::vector<std::uint32_t>{0}, 3), UsageError);
}

TEST(Metrics, ArgmaxTiesPickLowestIndex) {
  EXPECT_EQ(argmax(std::vector<double>{0.2, 0.4, 0.4}), 1u);
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5}), 0u);
  EXPECT_EQ(argmax(std::vector<double>{0.1, 0.2, 0.7}), 2u);
}

// ---------------------------------------------------------------------------
// Training loop

TEST(Train, DeterministicGivenSeeds) {
  const Dataset data = small_split(2, 3);
  TrainConfig t = quiet_train();
  t.augment = true;
  t.epochs = 2;
  auto run = [&] {
    ModelParams p = ModelParams::initialize(ModelConfig{}, 1);
    AdamState s = AdamState::zeros_like(p.tensors());
    const auto logs = train(p, s, data, &data, t);
    return std::tuple{p, s, logs.back().mean_loss, evaluate(p, data)};
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(std::get<0>(a), std::get<0>(b));
  EXPECT_EQ(std::get<1>(a), std::get<1>(b));
  EXPECT_EQ(std::get<2>(a), std::get<2>(b));
  EXPECT_EQ(std::get<3>(a), std::get<3>(b));
}

TEST(Train, OverfitsTenSamples) {
  DataConfig d = small_data(1);
  d.num_classes = 6;
  DatasetSpec spec = d.split(1, 4);
  spec.counts = {2, 2, 2, 2, 1, 1};
  const Dataset data = build_dataset(spec);
  ASSERT_EQ(data.samples.size(), 10u);
  TrainConfig t = quiet_train();
  t.smoothing = 0.0;
  t.epochs = 50;
  ModelParams p = ModelParams::initialize(ModelConfig{}, 2);
  AdamState s = AdamState::zeros_like(p.tensors());
  const auto logs = train(p, s, data, nullptr, t);
  EXPECT_LT(logs.back().mean_loss, 0.1 * logs.front().mean_loss);
  EXPECT_DOUBLE_EQ(evaluate(p, data).per_instance_acc, 1.0);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const Dataset data = small_split(1, 5);
  TrainConfig t = quiet_train();
  t.optimizer.learning_rate = 0.0;
  t.optimizer.weight_decay = 0.0;
  t.epochs = 1;
  ModelParams p = ModelParams::initialize(ModelConfig{}, 3);
  const ModelParams before = p;
  AdamState s = AdamState::zeros_like(p.tensors());
  train(p, s, data, nullptr, t);
  EXPECT_EQ(p, before);
  EXPECT_GT(s.step, 0u);
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Train, GammaZeroIgnoresViewHeads) {
  // With gamma = 0 the view-level head receives no gradient at all.
  const Dataset data = small_split(1, 6);
  ModelParams p = ModelParams::initialize(ModelConfig{}, 3);
  ForwardOptions o;
  o.loss.gamma = 0.0;
  const auto r = forward_backward(p, data.samples[0], o);
  for (const char* name : {"head_q.weight", "head_q.bias"})
    for (double g : r.grads[p.index_of(name)].data()) EXPECT_EQ(g, 0.0);
}

TEST(Train, RejectsBadInputs) {
  ModelParams p = ModelParams::initialize(ModelConfig{}, 3);
  AdamState s = AdamState::zeros_like(p.tensors());
  Dataset empty;
  EXPECT_THROW(train_epoch(p, empty, quiet_train(), s, 0), UsageError);
  TrainConfig bad = quiet_train();
  bad.smoothing = 1.0;
  EXPECT_THROW(train_epoch(p, small_split(1, 1), bad, s, 0), ConfigError);
  ModelConfig k3;
  k3.num_classes = 3;
  EXPECT_THROW(evaluate(ModelParams::initialize(k3, 1), small_split(1, 1)), UsageError);
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, RoundTripIsBitExact) {
  const Dataset data = small_split(1, 7);
  ModelParams p = ModelParams::initialize(ModelConfig{}, 4);
  AdamState s = AdamState::zeros_like(p.tensors());
  TrainConfig t = quiet_train();
  t.epochs = 1;
  train(p, s, data, nullptr, t);
  const auto dir = scratch_dir("ckpt");
  const nlohmann::json cfg{{"epochs_completed", 1}};
  save_checkpoint(p, s, cfg, dir / "c.bin");
  const Checkpoint c = load_checkpoint(dir / "c.bin", ModelConfig{});
  EXPECT_EQ(c.params, p);
  EXPECT_EQ(c.state, s);
  EXPECT_EQ(c.config, cfg);
  EXPECT_EQ(evaluate(c.params, data), evaluate(p, data));
}

TEST(Checkpoint, RejectsCorruptionAndMismatch) {
  const ModelParams p = ModelParams::initialize(ModelConfig::tiny(), 4);
  const AdamState s = AdamState::zeros_like(p.tensors());
  const auto bytes = encode_checkpoint(p, s, nlohmann::json::object());
  EXPECT_EQ(decode_checkpoint(bytes, "mem").params, p);
  std::vector<char> cut(bytes.begin(), bytes.end() - 5);
  EXPECT_THROW(decode_checkpoint(cut, "mem"), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_checkpoint(extra, "mem"), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic, "mem"), FormatError);
  ModelConfig other = ModelConfig::tiny();
  other.attention_maps = 4;
  EXPECT_THROW(decode_checkpoint(bytes, "mem", other), FormatError);
  EXPECT_THROW(load_checkpoint(scratch_dir("ckpt_missing") / "none.bin"), IoError);
}

TEST(Checkpoint, AttentionMapCountMismatchIsRejected) {
  ModelConfig m32, m64;
  m32.attention_maps = 32;
  const ModelParams p = ModelParams::initialize(m32, 1);
  const auto dir = scratch_dir("ckpt_m");
  save_checkpoint(p, AdamState::zeros_like(p.tensors()), {}, dir / "m32.bin");
  EXPECT_THROW(load_checkpoint(dir / "m32.bin", m64), FormatError);
  EXPECT_NO_THROW(load_checkpoint(dir / "m32.bin", m32));
}

// ---------------------------------------------------------------------------
// Ablation grids

TEST(Ablation, SuiteSettings) {
  const ModelConfig m;
  const TrainConfig t;
  const DataConfig d;
  const auto comp = ablation_settings(AblationSuite::component, m, t, d);
  ASSERT_EQ(comp.size(), 3u);
  EXPECT_FALSE(comp[0].model.use_cva);
  EXPECT_EQ(comp[0].train.gamma, 0.0);
  EXPECT_TRUE(comp[1].model.use_cva);
  EXPECT_EQ(comp[1].train.gamma, 0.0);
  EXPECT_FALSE(comp[2].model.use_cva);
  EXPECT_EQ(comp[2].train.gamma, 1.0);

  const auto ms = ablation_settings(AblationSuite::attention_M, m, t, d);
  ASSERT_EQ(ms.size(), 4u);
  EXPECT_EQ(ms[3].model.attention_maps, 128u);
  const auto ls = ablation_settings(AblationSuite::parts_L, m, t, d);
  EXPECT_EQ(ls[0].model.part_tokens, 1u);
  EXPECT_EQ(ls[3].model.part_tokens, 32u);
  const auto ss = ablation_settings(AblationSuite::sampler, m, t, d);
  EXPECT_EQ(ss[1].data.sampler, ViewSampler::fps);
  EXPECT_EQ(parse_suite("parts_L"), AblationSuite::parts_L);
  EXPECT_THROW(parse_suite("everything"), UsageError);
}

TEST(Ablation, RowsAndCsv) {
  ModelConfig m = ModelConfig::tiny();
  TrainConfig t = quiet_train();
  t.epochs = 1;
  DataConfig d = small_data(1);
  d.num_classes = 3;
  const auto rows = run_ablation(AblationSuite::sampler, m, t, d, {1, 2});
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[2].seed, "mean");
  EXPECT_NEAR(rows[2].per_instance_acc, (rows[0].per_instance_acc + rows[1].per_instance_acc) / 2, 1e-15);
  const std::string csv = ablation_csv(rows);
  EXPECT_EQ(csv.substr(0, kAblationCsvHeader.size()), kAblationCsvHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  const auto again = run_ablation(AblationSuite::sampler, m, t, d, {1, 2});
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].per_class_acc, again[i].per_class_acc);
  EXPECT_THROW(run_ablation(AblationSuite::sampler, m, t, d, {}), UsageError);
}
