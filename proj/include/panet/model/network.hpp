#pragma once

// Forward graph of the part-aware network:
//   views -> shared conv encoder -> cross-view association -> attention maps
//   -> attention-weighted part descriptors -> token refinement -> heads/loss.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "panet/errors.hpp"
#include "panet/model/config.hpp"
#include "panet/model/params.hpp"
#include "panet/rng.hpp"
#include "panet/shapegen/augment.hpp"
#include "panet/shapegen/dataset.hpp"
#include "panet/tensor/ops.hpp"
#include "panet/tensor/tape.hpp"

namespace panet {

inline Tensor view_tensor(const Image& img) {
  std::vector<double> data(img.pixels.begin(), img.pixels.end());
  return Tensor({img.size, img.size, 1}, std::move(data));
}

/// Runs every view through the same four conv3x3-relu blocks (stride 2) and
/// stacks the results: [v, H, W, C] with H = W = R / 16.
inline Var encode_views(std::span<const Var> views, std::span<const Var> params, const ParamLayout& layout) {
  if (views.empty()) throw UsageError("encode_views: no views");
  const Extents& first = views[0].shape();
  std::vector<Var> encoded;
  encoded.reserve(views.size());
  for (const Var& view : views) {
    if (view.shape() != first)
      throw DimensionError("encode_views: view " + shape_str(view.shape()) + " differs from " + shape_str(first));
    Var x = view;
    for (const auto& block : layout.encoder) {
      // One leading pad row/column: (H + 1 - 3) / 2 + 1 = H / 2 for even H.
      x = conv2d(x, params[block.weight], 2, Padding{1, 0});
      x = relu(add_bias(x, params[block.bias]));
    }
    Extents s = x.shape();
    s.insert(s.begin(), 1);
    encoded.push_back(reshape(x, s));
  }
  return concat_rows(encoded);
}

struct CrossViewResult {
  Var features;  // F, [v, H, W, C]
  Var weights;   // softmax association weights, [v, v]
};

/// F_i = sum_j softmax_j(g_i . g_j) I_j with g = spatially pooled I.
inline CrossViewResult cross_view_associate(const Var& stack) {
  if (stack.value().rank() != 4) throw DimensionError("cross_view_associate: expected [v,H,W,C]");
  const std::size_t v = stack.dim(0);
  const Var pooled = global_avg_pool(stack);          // [v, C]
  const Var scores = matmul(pooled, transpose(pooled));  // [v, v]
  const Var weights = softmax_lastdim(scores);
  const Var flat = reshape(stack, {v, stack.numel() / v});
  const Var mixed = matmul(weights, flat);
  return {reshape(mixed, stack.shape()), weights};
}

/// A = relu(conv1x1(F)), one map per attention channel. Accepts [H, W, C]
/// or a batch [v, H, W, C]; the output replaces C with M.
inline Var attend_parts(const Var& features, const Var& weight, const Var& bias) {
  const Extents& s = features.shape();
  if (s.size() != 3 && s.size() != 4) throw DimensionError("attend_parts: expected [H,W,C] or [v,H,W,C]");
  const std::size_t c = s.back();
  const std::size_t pixels = features.numel() / c;
  const Var flat = reshape(features, {pixels, c});
  const Var maps = relu(add_bias(matmul(flat, weight), bias));
  Extents out = s;
  out.back() = weight.dim(1);
  return reshape(maps, out);
}

/// t_{i,j} = mean over pixels of F_i * A_{i,j}; rows ordered view-major,
/// then by attention map: [v * M, C].
inline Var sample_parts(const Var& features, const Var& attention) {
  const Extents& fs = features.shape();
  const Extents& as = attention.shape();
  if (fs.size() != 4 || as.size() != 4 || fs[0] != as[0] || fs[1] != as[1] || fs[2] != as[2])
    throw DimensionError("sample_parts: F " + shape_str(fs) + " and A " + shape_str(as) + " disagree");
  const std::size_t v = fs[0], hw = fs[1] * fs[2], c = fs[3], m = as[3];
  const Var f2 = reshape(features, {v * hw, c});
  const Var a2 = reshape(attention, {v * hw, m});
  std::vector<Var> per_view;
  per_view.reserve(v);
  for (std::size_t i = 0; i < v; ++i) {
    const Var fi = slice_rows(f2, i * hw, hw);
    const Var ai = slice_rows(a2, i * hw, hw);
    per_view.push_back(scale(matmul(transpose(ai), fi), 1.0 / static_cast<double>(hw)));
  }
  return concat_rows(per_view);
}

/// Prepends the part tokens to T and applies pre-norm transformer layers
/// (self-attention and MLP, each residual) with no positional terms. Only
/// the token rows are returned, so the last layer computes queries for
/// those rows alone.
inline Var apr_refine(const Var& parts, std::span<const Var> params, const ParamLayout& layout,
                      const ModelConfig& cfg) {
  const Var& tokens = params[layout.part_tokens];
  if (parts.value().rank() != 2 || parts.dim(1) != tokens.dim(1))
    throw DimensionError("apr_refine: part sequence " + shape_str(parts.shape()) + " vs tokens " +
                         shape_str(tokens.shape()));
  const std::size_t l = tokens.dim(0);
  Var x = concat_rows({tokens, parts});
  for (std::size_t li = 0; li < layout.layers.size(); ++li) {
    const auto& p = layout.layers[li];
    const bool last = li + 1 == layout.layers.size();
    const std::size_t rows = last ? l : x.dim(0);
    const Var h = layer_norm(x, params[p.ln1_gain], params[p.ln1_bias]);
    const Var hq = last ? slice_rows(h, 0, rows) : h;
    const Var q = add_bias(matmul(hq, params[p.wq]), params[p.bq]);
    const Var k = add_bias(matmul(h, params[p.wk]), params[p.bk]);
    const Var vv = add_bias(matmul(h, params[p.wv]), params[p.bv]);
    const Var att = multi_head_attention(q, k, vv, cfg.heads);
    const Var o = add_bias(matmul(att, params[p.wo]), params[p.bo]);
    x = add(last ? slice_rows(x, 0, rows) : x, o);
    const Var h2 = layer_norm(x, params[p.ln2_gain], params[p.ln2_bias]);
    const Var hidden = relu(add_bias(matmul(h2, params[p.w1]), params[p.b1]));
    x = add(x, add_bias(matmul(hidden, params[p.w2]), params[p.b2]));
  }
  return x;
}

struct PartPrediction {
  Var part_probs;  // p^i, [L, K]
  Var probs;       // mean over parts, [K]
};

inline PartPrediction predict_parts(const Var& global_parts, const Var& weight, const Var& bias) {
  const Var probs = softmax_lastdim(add_bias(matmul(global_parts, weight), bias));
  return {probs, mean_rows(probs)};
}

/// q^j from the view's M parts flattened part-major into one (M*C)-vector.
inline Var view_part_probs(const Var& parts, std::size_t views, const Var& weight, const Var& bias) {
  if (views == 0 || parts.dim(0) % views != 0)
    throw DimensionError("view_part_probs: " + std::to_string(parts.dim(0)) + " parts not divisible by " +
                         std::to_string(views) + " views");
  const Var flat = reshape(parts, {views, parts.numel() / views});
  return softmax_lastdim(add_bias(matmul(flat, weight), bias));
}

inline std::vector<double> label_smooth(std::uint32_t label, std::uint32_t num_classes, double epsilon) {
  if (label >= num_classes) throw UsageError("label " + std::to_string(label) + " outside [0, K)");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw UsageError("label smoothing must lie in [0, 1)");
  std::vector<double> t(num_classes, epsilon / num_classes);
  t[label] += 1.0 - epsilon;
  return t;
}

inline constexpr double kLogFloor = 1e-12;

struct LossTerms {
  Var total;
  Var ce;   // instance loss on the averaged part prediction
  Var awe;  // mean per-view part-aware loss
};

/// L = -sum_k y~_k log p^_k + gamma * (-(1/v) sum_j sum_k y~_k log q^j_k),
/// y~ the smoothed target.
inline LossTerms total_loss(const Var& probs, const Var& view_probs, std::uint32_t label, double gamma,
                            double smoothing) {
  const std::size_t k = probs.numel();
  const std::size_t v = view_probs.dim(0);
  if (view_probs.dim(1) != k) throw DimensionError("total_loss: view and object predictions disagree on K");
  const auto target = label_smooth(label, static_cast<std::uint32_t>(k), smoothing);
  Tape& tape = probs.tape();
  const Var y = tape.constant(Tensor({k}, target));
  std::vector<double> tiled;
  tiled.reserve(v * k);
  for (std::size_t j = 0; j < v; ++j) tiled.insert(tiled.end(), target.begin(), target.end());
  const Var yv = tape.constant(Tensor({v, k}, std::move(tiled)));
  const Var ce = scale(sum(mul(y, log_clamped(probs, kLogFloor))), -1.0);
  const Var awe = scale(sum(mul(yv, log_clamped(view_probs, kLogFloor))), -1.0 / static_cast<double>(v));
  return {add(ce, scale(awe, gamma)), ce, awe};
}

struct GraphOutputs {
  Var features;      // I
  Var enhanced;      // F
  Var cva_weights;   // [v, v]; identity when association is disabled
  Var attention;     // A, [v, H, W, M]
  Var parts;         // T, [v*M, C]
  Var global_parts;  // P-bar, [L, C]
  Var part_probs;
  Var probs;
  Var view_probs;
  LossTerms loss;
};

struct LossOptions {
  double gamma = 1.0;
  double smoothing = 0.1;
};

inline GraphOutputs build_graph(Tape& tape, const ModelConfig& cfg, const ParamLayout& layout,
                                std::span<const Var> params, std::span<const Tensor> views,
                                std::uint32_t label, const LossOptions& loss) {
  if (views.empty() || views.size() > kMaxViews)
    throw UsageError("forward: view count " + std::to_string(views.size()) + " outside [1, 20]");
  if (label >= cfg.num_classes) throw UsageError("forward: label " + std::to_string(label) + " outside [0, K)");
  std::vector<Var> inputs;
  inputs.reserve(views.size());
  for (const Tensor& t : views) {
    if (t.shape() != Extents{cfg.resolution, cfg.resolution, 1})
      throw DimensionError("forward: view " + shape_str(t.shape()) + " does not match resolution " +
                           std::to_string(cfg.resolution));
    inputs.push_back(tape.constant(t));
  }
  GraphOutputs g;
  g.features = encode_views(inputs, params, layout);
  const std::size_t v = views.size();
  if (cfg.use_cva) {
    auto cva = cross_view_associate(g.features);
    g.enhanced = cva.features;
    g.cva_weights = cva.weights;
  } else {
    g.enhanced = g.features;
    std::vector<double> eye(v * v, 0.0);
    for (std::size_t i = 0; i < v; ++i) eye[i * v + i] = 1.0;
    g.cva_weights = tape.constant(Tensor({v, v}, std::move(eye)));
  }
  g.attention = attend_parts(g.enhanced, params[layout.psi.weight], params[layout.psi.bias]);
  g.parts = sample_parts(g.enhanced, g.attention);
  g.global_parts = apr_refine(g.parts, params, layout, cfg);
  auto pred = predict_parts(g.global_parts, params[layout.head_p.weight], params[layout.head_p.bias]);
  g.part_probs = pred.part_probs;
  g.probs = pred.probs;
  g.view_probs = view_part_probs(g.parts, v, params[layout.head_q.weight], params[layout.head_q.bias]);
  g.loss = total_loss(g.probs, g.view_probs, label, loss.gamma, loss.smoothing);
  return g;
}

// ---------------------------------------------------------------------------
// Tensor-level entry points.

struct ForwardOptions {
  bool train_mode = false;
  std::uint64_t augment_seed = 0;
  double flip_prob = 0.5;
  double erase_prob = 0.5;
  LossOptions loss;
  std::size_t max_views = 0;  // evaluate on the first max_views views; 0 = all
};

struct ForwardResult {
  Tensor probs;         // [K]
  Tensor part_probs;    // [L, K]
  Tensor view_probs;    // [v, K]
  double loss = 0.0;
  double loss_ce = 0.0;
  double loss_awe = 0.0;
  Tensor attention;     // [v, H, W, M]
  Tensor parts;         // [v*M, C]
  Tensor global_parts;  // [L, C]
  Tensor cva_weights;   // [v, v]
};

inline std::vector<Tensor> prepare_views(const MultiViewSample& sample, const ForwardOptions& opt) {
  std::size_t v = sample.view_count();
  if (opt.max_views != 0) v = std::min(v, opt.max_views);
  std::vector<Tensor> views;
  views.reserve(v);
  for (std::size_t i = 0; i < v; ++i) {
    if (opt.train_mode)
      views.push_back(view_tensor(
          augment(sample.views[i], derive_seed(opt.augment_seed, {i}), opt.flip_prob, opt.erase_prob)));
    else
      views.push_back(view_tensor(sample.views[i]));
  }
  return views;
}

inline ForwardResult collect(const GraphOutputs& g) {
  ForwardResult r;
  r.probs = g.probs.value();
  r.part_probs = g.part_probs.value();
  r.view_probs = g.view_probs.value();
  r.loss = g.loss.total.value().item();
  r.loss_ce = g.loss.ce.value().item();
  r.loss_awe = g.loss.awe.value().item();
  r.attention = g.attention.value();
  r.parts = g.parts.value();
  r.global_parts = g.global_parts.value();
  r.cva_weights = g.cva_weights.value();
  return r;
}

inline ForwardResult forward(const ModelParams& params, const MultiViewSample& sample,
                             const ForwardOptions& opt = {}) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& t : params.tensors()) vars.push_back(tape.constant(t));
  const auto views = prepare_views(sample, opt);
  return collect(build_graph(tape, params.config(), params.layout(), vars, views, sample.label, opt.loss));
}

struct ForwardBackwardResult {
  ForwardResult output;
  std::vector<Tensor> grads;  // aligned with ModelParams order
};

inline ForwardBackwardResult forward_backward(const ModelParams& params, const MultiViewSample& sample,
                                              const ForwardOptions& opt = {}) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& t : params.tensors()) vars.push_back(tape.variable(t));
  const auto views = prepare_views(sample, opt);
  GraphOutputs g = build_graph(tape, params.config(), params.layout(), vars, views, sample.label, opt.loss);
  ForwardBackwardResult r;
  r.output = collect(g);
  Gradients grads = tape.backward(g.loss.total);
  r.grads.reserve(vars.size());
  for (const Var& v : vars) r.grads.push_back(grads[v]);
  return r;
}

}  // namespace panet
