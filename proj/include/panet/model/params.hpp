#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "panet/errors.hpp"
#include "panet/model/config.hpp"
#include "panet/rng.hpp"
#include "panet/tensor/tensor.hpp"

namespace panet {

// Positions of each named parameter inside ModelParams.
struct ParamLayout {
  struct Conv {
    std::size_t weight = 0, bias = 0;
  };
  struct Layer {
    std::size_t ln1_gain = 0, ln1_bias = 0;
    std::size_t wq = 0, bq = 0, wk = 0, bk = 0, wv = 0, bv = 0, wo = 0, bo = 0;
    std::size_t ln2_gain = 0, ln2_bias = 0;
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  };
  std::array<Conv, ModelConfig::kEncoderBlocks> encoder{};
  Conv psi{};
  std::size_t part_tokens = 0;
  std::vector<Layer> layers;
  Conv head_p{};
  Conv head_q{};
};

enum class Init { zeros, ones, he_normal, xavier_normal, token_normal };

struct ParamSpec {
  std::string name;
  Extents shape;
  Init init;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

struct ParamTable {
  std::vector<ParamSpec> specs;
  ParamLayout layout;
};

inline ParamTable param_table(const ModelConfig& cfg) {
  cfg.validate();
  ParamTable t;
  auto add = [&](std::string name, Extents shape, Init init, std::size_t fan_in = 0, std::size_t fan_out = 0) {
    t.specs.push_back({std::move(name), std::move(shape), init, fan_in, fan_out});
    return t.specs.size() - 1;
  };
  const std::size_t c = cfg.channels, k = cfg.num_classes, m = cfg.attention_maps;
  const std::array<std::size_t, 5> widths{1, cfg.encoder_widths[0], cfg.encoder_widths[1], cfg.encoder_widths[2], c};
  for (std::size_t b = 0; b < ModelConfig::kEncoderBlocks; ++b) {
    const std::string p = "encoder." + std::to_string(b);
    t.layout.encoder[b].weight = add(p + ".weight", {3, 3, widths[b], widths[b + 1]}, Init::he_normal, 9 * widths[b]);
    t.layout.encoder[b].bias = add(p + ".bias", {widths[b + 1]}, Init::zeros);
  }
  t.layout.psi.weight = add("psi.weight", {c, m}, Init::he_normal, c);
  t.layout.psi.bias = add("psi.bias", {m}, Init::zeros);
  t.layout.part_tokens = add("apr.tokens", {cfg.part_tokens, c}, Init::token_normal);
  const std::size_t hidden = cfg.mlp_ratio * c;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string p = "apr." + std::to_string(l);
    ParamLayout::Layer L;
    L.ln1_gain = add(p + ".ln1.gain", {c}, Init::ones);
    L.ln1_bias = add(p + ".ln1.bias", {c}, Init::zeros);
    L.wq = add(p + ".attn.wq", {c, c}, Init::xavier_normal, c, c);
    L.bq = add(p + ".attn.bq", {c}, Init::zeros);
    L.wk = add(p + ".attn.wk", {c, c}, Init::xavier_normal, c, c);
    L.bk = add(p + ".attn.bk", {c}, Init::zeros);
    L.wv = add(p + ".attn.wv", {c, c}, Init::xavier_normal, c, c);
    L.bv = add(p + ".attn.bv", {c}, Init::zeros);
    L.wo = add(p + ".attn.wo", {c, c}, Init::xavier_normal, c, c);
    L.bo = add(p + ".attn.bo", {c}, Init::zeros);
    L.ln2_gain = add(p + ".ln2.gain", {c}, Init::ones);
    L.ln2_bias = add(p + ".ln2.bias", {c}, Init::zeros);
    L.w1 = add(p + ".mlp.w1", {c, hidden}, Init::xavier_normal, c, hidden);
    L.b1 = add(p + ".mlp.b1", {hidden}, Init::zeros);
    L.w2 = add(p + ".mlp.w2", {hidden, c}, Init::xavier_normal, hidden, c);
    L.b2 = add(p + ".mlp.b2", {c}, Init::zeros);
    t.layout.layers.push_back(L);
  }
  t.layout.head_p.weight = add("head_p.weight", {c, k}, Init::xavier_normal, c, k);
  t.layout.head_p.bias = add("head_p.bias", {k}, Init::zeros);
  t.layout.head_q.weight = add("head_q.weight", {m * c, k}, Init::xavier_normal, m * c, k);
  t.layout.head_q.bias = add("head_q.bias", {k}, Init::zeros);
  return t;
}

inline constexpr double kPartTokenInitStd = 0.02;

/// Every learnable tensor of the network, in a fixed order.
class ModelParams {
 public:
  ModelParams() = default;

  static ModelParams initialize(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p(cfg);
    Rng rng(derive_seed(seed, {0x1417}));
    for (const ParamSpec& s : p.table_.specs) {
      const std::size_t n = shape_numel(s.shape);
      std::vector<double> data(n, 0.0);
      double stddev = 0.0;
      switch (s.init) {
        case Init::zeros: break;
        case Init::ones: std::fill(data.begin(), data.end(), 1.0); break;
        case Init::he_normal: stddev = std::sqrt(2.0 / static_cast<double>(s.fan_in)); break;
        case Init::xavier_normal:
          stddev = std::sqrt(2.0 / static_cast<double>(s.fan_in + s.fan_out));
          break;
        case Init::token_normal: stddev = kPartTokenInitStd; break;
      }
      if (stddev > 0.0)
        for (double& v : data) v = rng.normal(0.0, stddev);
      p.tensors_.emplace_back(s.shape, std::move(data));
    }
    return p;
  }

  // All-zero parameters of the right shapes (layer-norm gains included).
  static ModelParams zeros(const ModelConfig& cfg) {
    ModelParams p(cfg);
    for (const ParamSpec& s : p.table_.specs) p.tensors_.push_back(Tensor::zeros(s.shape));
    return p;
  }

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return table_.layout; }
  const std::vector<ParamSpec>& specs() const { return table_.specs; }

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return table_.specs.at(i).name; }
  const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::vector<Tensor>& mutable_tensors() { return tensors_; }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < table_.specs.size(); ++i)
      if (table_.specs[i].name == name) return i;
    throw UsageError("no parameter named '" + std::string(name) + "'");
  }

  void set(std::size_t i, Tensor t) {
    if (t.shape() != table_.specs.at(i).shape)
      throw DimensionError("parameter " + name(i) + ": expected " + shape_str(table_.specs[i].shape) +
                           ", got " + shape_str(t.shape()));
    tensors_[i] = std::move(t);
  }
  void set(std::string_view name, Tensor t) { set(index_of(name), std::move(t)); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const Tensor& t : tensors_) n += t.numel();
    return n;
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.config_ == b.config_ && a.tensors_ == b.tensors_;
  }

 private:
  explicit ModelParams(const ModelConfig& cfg) : config_(cfg), table_(param_table(cfg)) {}

  ModelConfig config_;
  ParamTable table_;
  std::vector<Tensor> tensors_;
};

}  // namespace panet
