#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "panet/errors.hpp"
#include "panet/model/gradcheck.hpp"
#include "panet/model/network.hpp"
#include "panet/model/params.hpp"
#include "panet/shapegen/dataset.hpp"
#include "test_helpers.hpp"

using namespace panet;
using panet::testing::random_tensor;

namespace {

MultiViewSample object(std::uint32_t label, std::size_t views, std::uint64_t seed, std::uint32_t r = 32) {
  const Shape s = apply_pose_regime(generate_shape(label, seed), PoseRegime::rotated, seed);
  return make_sample(s, sample_viewpoints_random(views, seed), r);
}

MultiViewSample permuted(const MultiViewSample& s, const std::vector<std::size_t>& order) {
  MultiViewSample out;
  out.label = s.label;
  for (std::size_t i : order) {
    out.views.push_back(s.views[i]);
    out.viewpoints.push_back(s.viewpoints[i]);
  }
  return out;
}

std::vector<Var> constants(Tape& tape, const ModelParams& p) {
  std::vector<Var> v;
  for (const Tensor& t : p.tensors()) v.push_back(tape.constant(t));
  return v;
}

double max_abs(const Tensor& a, const Tensor& b) { return max_abs_diff(a, b); }

}  // namespace

// ---------------------------------------------------------------------------
// Hand values

TEST(CrossView, ScalarHandExample) {
  Tape tape;
  auto r = cross_view_associate(tape.constant(Tensor({2, 1, 1, 1}, {2.0, 4.0})));
  // softmax([4, 8]) = [0.01799, 0.98201]
  const double a = 1.0 / (1.0 + std::exp(4.0));
  EXPECT_NEAR(r.features.value()[0], a * 2 + (1 - a) * 4, 1e-12);
  EXPECT_NEAR(r.features.value()[0], 3.9640, 1e-4);
}

TEST(CrossView, SingleAndIdenticalViews) {
  Tape tape;
  const Tensor one = random_tensor({1, 2, 2, 3}, 1, 0.0, 1.0);
  EXPECT_EQ(cross_view_associate(tape.constant(one)).features.value(), one);
  std::vector<double> rep;
  for (int i = 0; i < 3; ++i) rep.insert(rep.end(), one.data().begin(), one.data().end());
  auto same = cross_view_associate(tape.constant(Tensor({3, 2, 2, 3}, rep)));
  for (std::size_t i = 0; i < rep.size(); ++i) EXPECT_NEAR(same.features.value()[i], rep[i], 1e-12);
}

TEST(CrossView, ConvexCombination) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tape tape;
    const Tensor x = random_tensor({4, 2, 2, 3}, seed, 0.0, 2.0);
    auto r = cross_view_associate(tape.constant(x));
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 4; ++j) s += r.weights.value()[i * 4 + j];
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
    const std::size_t per = 12;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t e = 0; e < per; ++e) {
        double lo = 1e9, hi = -1e9;
        for (std::size_t j = 0; j < 4; ++j) {
          lo = std::min(lo, x[j * per + e]);
          hi = std::max(hi, x[j * per + e]);
        }
        EXPECT_GE(r.features.value()[i * per + e], lo - 1e-12);
        EXPECT_LE(r.features.value()[i * per + e], hi + 1e-12);
      }
  }
}

TEST(SampleParts, HandExampleAndDegenerateMaps) {
  Tape tape;
  Var f = tape.constant(Tensor({1, 1, 2, 1}, {1.0, 3.0}));
  EXPECT_DOUBLE_EQ(sample_parts(f, tape.constant(Tensor({1, 1, 2, 1}, {0.0, 1.0}))).value().item(), 1.5);

  const Tensor feat = random_tensor({2, 2, 2, 3}, 4, 0.0, 1.0);
  Var fv = tape.constant(feat);
  Var ones = sample_parts(fv, tape.constant(Tensor::ones({2, 2, 2, 1})));
  Var pooled = global_avg_pool(fv);
  EXPECT_LT(max_abs(ones.value(), pooled.value()), 1e-15);
  for (double v : sample_parts(fv, tape.constant(Tensor::zeros({2, 2, 2, 4}))).value().data()) EXPECT_EQ(v, 0.0);
}

TEST(SampleParts, ViewMajorOrdering) {
  Tape tape;
  const Tensor f = random_tensor({3, 2, 2, 4}, 7, 0.0, 1.0);
  const Tensor a = random_tensor({3, 2, 2, 5}, 8, 0.0, 1.0);
  const Var t = sample_parts(tape.constant(f), tape.constant(a));
  ASSERT_EQ(t.shape(), (Extents{15, 4}));
  for (std::size_t i = 0; i < 3; ++i) {
    Var fi = slice_rows(reshape(tape.constant(f), {3, 16}), i, 1);
    Var ai = slice_rows(reshape(tape.constant(a), {3, 20}), i, 1);
    Var ti = sample_parts(reshape(fi, {1, 2, 2, 4}), reshape(ai, {1, 2, 2, 5}));
    EXPECT_EQ(slice_rows(t, i * 5, 5).value(), ti.value());
  }
}

TEST(Heads, AveragedProbabilitiesHandExample) {
  Tape tape;
  Var parts = tape.constant(Tensor({2, 2}, {std::log(0.8), std::log(0.2), std::log(0.6), std::log(0.4)}));
  auto pred = predict_parts(parts, tape.constant(Tensor({2, 2}, {1, 0, 0, 1})), tape.constant(Tensor::zeros({2})));
  EXPECT_NEAR(pred.probs.value()[0], 0.7, 1e-12);
  EXPECT_NEAR(pred.probs.value()[1], 0.3, 1e-12);
  auto single = predict_parts(slice_rows(parts, 0, 1), tape.constant(Tensor({2, 2}, {1, 0, 0, 1})),
                              tape.constant(Tensor::zeros({2})));
  EXPECT_LT(max_abs(single.probs.value(), single.part_probs.value().reshaped({2})), 1e-15);
}

TEST(Heads, ZeroViewHeadIsUniformAndSumsToOne) {
  Tape tape;
  Var t = tape.constant(random_tensor({6, 4}, 3));
  auto q = view_part_probs(t, 2, tape.constant(Tensor::zeros({12, 5})), tape.constant(Tensor::zeros({5})));
  for (double v : q.value().data()) EXPECT_NEAR(v, 0.2, 1e-15);
  auto q2 = view_part_probs(t, 3, tape.constant(random_tensor({8, 5}, 4)), tape.constant(random_tensor({5}, 5)));
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < 5; ++k) s += q2.value()[j * 5 + k];
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Heads, ViewFlatteningIsPartMajor) {
  // q^j depends on row (j*M + m), column c through weight row m*C + c.
  Tape tape;
  const std::size_t m = 2, c = 3;
  std::vector<double> w(m * c * 2, 0.0);
  w[(1 * c + 2) * 2 + 0] = 10.0;  // part 1, channel 2 -> class 0
  Var t = tape.constant(Tensor({m, c}, {0, 0, 0, 0, 0, 1}));
  auto q = view_part_probs(t, 1, tape.constant(Tensor({m * c, 2}, w)), tape.constant(Tensor::zeros({2})));
  EXPECT_NEAR(q.value()[0], 1.0 / (1.0 + std::exp(-10.0)), 1e-12);
}

TEST(Loss, HandValues) {
  Tape tape;
  auto l = total_loss(tape.constant(Tensor({2}, {0.75, 0.25})), tape.constant(Tensor({1, 2}, {0.5, 0.5})), 0, 1.0, 0.0);
  EXPECT_NEAR(l.total.value().item(), -std::log(0.75) - std::log(0.5), 1e-12);
  EXPECT_NEAR(l.total.value().item(), 0.9808, 1e-4);

  auto u = total_loss(tape.constant(Tensor::full({5}, 0.2)), tape.constant(Tensor::full({3, 5}, 0.2)), 4, 1.0, 0.0);
  EXPECT_NEAR(u.total.value().item(), 2 * std::log(5.0), 1e-12);

  auto g0 = total_loss(tape.constant(Tensor({2}, {0.75, 0.25})), tape.constant(Tensor({1, 2}, {0.1, 0.9})), 0, 0.0, 0.1);
  EXPECT_EQ(g0.total.value().item(), g0.ce.value().item());
  EXPECT_THROW(total_loss(tape.constant(Tensor({2}, {0.5, 0.5})), tape.constant(Tensor({1, 2}, {0.5, 0.5})), 2, 1, 0),
               UsageError);
}

TEST(Loss, LabelSmoothing) {
  const auto t = label_smooth(2, 5, 0.1);
  const std::vector<double> expect{0.02, 0.02, 0.92, 0.02, 0.02};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(t[i], expect[i], 1e-15);
  EXPECT_EQ(label_smooth(1, 3, 0.0), (std::vector<double>{0, 1, 0}));
  for (double eps : {0.0, 0.05, 0.3, 0.99}) {
    const auto s = label_smooth(0, 7, eps);
    EXPECT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), 1.0, 1e-15);
  }
  EXPECT_THROW(label_smooth(5, 5, 0.1), UsageError);
  EXPECT_THROW(label_smooth(0, 5, 1.0), UsageError);
}

// ---------------------------------------------------------------------------
// Parameters

TEST(Params, TableShapesAndDeterministicInit) {
  const ModelConfig cfg;
  const ModelParams p = ModelParams::initialize(cfg, 3);
  EXPECT_EQ(p, ModelParams::initialize(cfg, 3));
  EXPECT_FALSE(p == ModelParams::initialize(cfg, 4));
  EXPECT_EQ(p[p.index_of("apr.tokens")].shape(), (Extents{16, 64}));
  EXPECT_EQ(p[p.index_of("psi.weight")].shape(), (Extents{64, 64}));
  EXPECT_EQ(p[p.index_of("head_q.weight")].shape(), (Extents{64 * 64, 6}));
  EXPECT_EQ(p[p.index_of("encoder.0.weight")].shape(), (Extents{3, 3, 1, 16}));
  EXPECT_EQ(p[p.index_of("encoder.3.weight")].shape(), (Extents{3, 3, 64, 64}));
  for (const Tensor& t : p.tensors()) EXPECT_TRUE(t.all_finite());
  EXPECT_THROW(p.index_of("nope"), UsageError);
}

TEST(Params, ConfigValidation) {
  ModelConfig c;
  c.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.resolution = 24;
  EXPECT_THROW(c.validate(), ConfigError);
}

// ---------------------------------------------------------------------------
// Encoder and refinement

TEST(Encoder, SharedWeightsAndPermutation) {
  const ModelConfig cfg;
  const ModelParams p = ModelParams::initialize(cfg, 1);
  Tape tape;
  auto params = constants(tape, p);
  const auto sample = object(2, 3, 5);
  std::vector<Var> views;
  for (const Image& im : sample.views) views.push_back(tape.constant(view_tensor(im)));
  const Var stack = encode_views(views, params, p.layout());
  ASSERT_EQ(stack.shape(), (Extents{3, 2, 2, 64}));
  std::vector<Var> swapped{views[2], views[0], views[1]};
  const Var s2 = encode_views(swapped, params, p.layout());
  const std::size_t per = 2 * 2 * 64;
  for (std::size_t e = 0; e < per; ++e) {
    EXPECT_EQ(s2.value()[e], stack.value()[2 * per + e]);
    EXPECT_EQ(s2.value()[per + e], stack.value()[e]);
  }
  const Var twice = encode_views(std::vector<Var>{views[0], views[0]}, params, p.layout());
  for (std::size_t e = 0; e < per; ++e) EXPECT_EQ(twice.value()[e], twice.value()[per + e]);
}

TEST(Encoder, ZeroImagesZeroBiasesGiveZeroFeatures) {
  const ModelParams p = ModelParams::initialize(ModelConfig{}, 1);  // biases start at zero
  Tape tape;
  auto params = constants(tape, p);
  std::vector<Var> views{tape.constant(Tensor::zeros({32, 32, 1}))};
  for (double v : encode_views(views, params, p.layout()).value().data()) EXPECT_EQ(v, 0.0);
  std::vector<Var> mixed{tape.constant(Tensor::zeros({32, 32, 1})), tape.constant(Tensor::zeros({16, 16, 1}))};
  EXPECT_THROW(encode_views(mixed, params, p.layout()), DimensionError);
}

TEST(Attention, NonNegativeMapsAndParts) {
  Tape tape;
  Var f = tape.constant(random_tensor({2, 2, 2, 4}, 3, 0.0, 1.0));
  Var a = attend_parts(f, tape.constant(random_tensor({4, 6}, 4)), tape.constant(random_tensor({6}, 5)));
  ASSERT_EQ(a.shape(), (Extents{2, 2, 2, 6}));
  for (double v : a.value().data()) EXPECT_GE(v, 0.0);
  for (double v : sample_parts(f, a).value().data()) EXPECT_GE(v, 0.0);
  Var z = attend_parts(tape.constant(Tensor::zeros({2, 2, 4})), tape.constant(random_tensor({4, 3}, 1)),
                       tape.constant(Tensor::zeros({3})));
  for (double v : z.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Refine, ZeroWeightBlocksAreIdentity) {
  ModelConfig cfg;
  cfg.depth = 2;
  ModelParams p = ModelParams::initialize(cfg, 2);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p.name(i).starts_with("apr.") && p.name(i) != "apr.tokens") p.set(i, Tensor::zeros(p[i].shape()));
  Tape tape;
  auto params = constants(tape, p);
  Var t = tape.constant(random_tensor({3 * 64, 64}, 9, 0.0, 1.0));
  EXPECT_EQ(apr_refine(t, params, p.layout(), cfg).value(), p[p.index_of("apr.tokens")]);
}

TEST(Refine, PermutingPartsLeavesGlobalPartsUnchanged) {
  ModelConfig cfg;
  cfg.depth = 2;
  const ModelParams p = ModelParams::initialize(cfg, 2);
  Tape tape;
  auto params = constants(tape, p);
  const Tensor t = random_tensor({40, 64}, 10, 0.0, 1.0);
  std::vector<std::size_t> order(40);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(3);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<double> perm;
  for (std::size_t r : order) perm.insert(perm.end(), t.data().begin() + r * 64, t.data().begin() + (r + 1) * 64);
  const Tensor a = apr_refine(tape.constant(t), params, p.layout(), cfg).value();
  const Tensor b = apr_refine(tape.constant(Tensor({40, 64}, perm)), params, p.layout(), cfg).value();
  EXPECT_LT(max_abs(a, b), 1e-9);
  EXPECT_EQ(a.shape(), (Extents{16, 64}));
}

TEST(Refine, IdenticalTokensGiveIdenticalRows) {
  ModelConfig cfg;
  ModelParams p = ModelParams::initialize(cfg, 2);
  const std::size_t ti = p.index_of("apr.tokens");
  std::vector<double> tok = p[ti].to_vector();
  std::copy(tok.begin(), tok.begin() + 64, tok.begin() + 64);
  p.set(ti, Tensor(p[ti].shape(), tok));
  Tape tape;
  auto params = constants(tape, p);
  const Tensor out = apr_refine(tape.constant(random_tensor({20, 64}, 1, 0, 1)), params, p.layout(), cfg).value();
  for (std::size_t c = 0; c < 64; ++c) EXPECT_NEAR(out[c], out[64 + c], 1e-12);
}

// ---------------------------------------------------------------------------
// Full forward pass

TEST(Forward, ViewCountFreedom) {
  const ModelConfig cfg;
  const ModelParams p = ModelParams::initialize(cfg, 4);
  for (std::size_t v : {1, 2, 5, 10, 20}) {
    const ForwardResult r = forward(p, object(1, v, v));
    double s = 0.0;
    for (double x : r.probs.data()) s += x;
    EXPECT_NEAR(s, 1.0, 1e-9) << v;
    EXPECT_EQ(r.global_parts.shape(), (Extents{16, 64}));
    EXPECT_EQ(r.parts.shape(), (Extents{v * 64, 64}));
    EXPECT_EQ(r.attention.shape(), (Extents{v, 2, 2, 64}));
  }
  MultiViewSample empty;
  EXPECT_THROW(forward(p, empty), UsageError);
  EXPECT_THROW(forward(p, object(1, 21, 1)), UsageError);
}

TEST(Forward, PermutationInvarianceAndDeterminism) {
  const ModelParams p = ModelParams::initialize(ModelConfig{}, 6);
  const auto s = object(4, 9, 2);
  const ForwardResult base = forward(p, s);
  EXPECT_EQ(base.probs, forward(p, s).probs);
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::size_t> order(9);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    const ForwardResult r = forward(p, permuted(s, order));
    EXPECT_LT(max_abs(base.probs, r.probs), 1e-9);
    EXPECT_LT(std::abs(base.loss - r.loss), 1e-9);
  }
}

TEST(Forward, AssociationCanBeDisabled) {
  ModelConfig cfg;
  cfg.use_cva = false;
  const ModelParams p = ModelParams::initialize(cfg, 6);
  const ForwardResult r = forward(p, object(0, 4, 3));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(r.cva_weights[i * 4 + j], i == j ? 1.0 : 0.0);
}

TEST(Forward, TrainModeAugmentsOnlyWhenAsked) {
  const ModelParams p = ModelParams::initialize(ModelConfig{}, 6);
  const auto s = object(3, 5, 3);
  ForwardOptions train;
  train.train_mode = true;
  train.augment_seed = 11;
  train.flip_prob = 1.0;
  EXPECT_NE(forward(p, s, train).probs, forward(p, s).probs);
  train.flip_prob = 0.0;
  train.erase_prob = 0.0;
  EXPECT_EQ(forward(p, s, train).probs, forward(p, s).probs);
}

TEST(Forward, GammaZeroDropsPartAwareTerm) {
  const ModelParams p = ModelParams::initialize(ModelConfig{}, 6);
  ForwardOptions o;
  o.loss.gamma = 0.0;
  const ForwardResult r = forward(p, object(3, 5, 3), o);
  EXPECT_EQ(r.loss, r.loss_ce);
  EXPECT_GT(r.loss_awe, 0.0);
}

TEST(Forward, MaxViewsUsesLeadingViews) {
  const ModelParams p = ModelParams::initialize(ModelConfig{}, 6);
  const auto s = object(3, 8, 3);
  ForwardOptions o;
  o.max_views = 3;
  MultiViewSample head = s;
  head.views.resize(3);
  head.viewpoints.resize(3);
  EXPECT_EQ(forward(p, s, o).probs, forward(p, head).probs);
}

// ---------------------------------------------------------------------------
// End-to-end gradient

TEST(EndToEnd, TinyConfigGradientAtFiveSeeds) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelGradCheck g = model_gradcheck(ModelConfig::tiny(), seed, 50);
    EXPECT_EQ(g.report.checked, 50u);
    EXPECT_LT(g.report.max_relative_error, 1e-3) << "seed " << seed;
  }
}

TEST(EndToEnd, KeyBiasGradientIsExactlyZero) {
  const ModelConfig cfg = ModelConfig::tiny();
  const ModelParams p = ModelParams::initialize(cfg, 1);
  const auto r = forward_backward(p, object(1, 3, 2));
  for (std::size_t i = 0; i < p.size(); ++i)
    if (structurally_zero_gradient(p.name(i)))
      for (double g : r.grads[i].data()) EXPECT_LT(std::abs(g), 1e-12) << p.name(i);
}
