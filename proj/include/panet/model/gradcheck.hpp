#pragma once

// End-to-end finite-difference check of the full network loss.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "panet/model/network.hpp"
#include "panet/rng.hpp"
#include "panet/shapegen/dataset.hpp"
#include "panet/tensor/gradcheck.hpp"

namespace panet {

struct ModelGradCheck {
  GradCheckReport report;
  std::size_t views = 0;
};

/// Random sample of `coordinates` scalar parameters, checked against central
/// differences of the total loss (gamma = 1) on a seeded multi-view object.
///
/// Zero-initialized biases are jittered first. With zero biases every
/// background patch (all-zero input) sits exactly on a ReLU kink, where the
/// one-sided derivative and a central difference legitimately disagree.
/// Attention key biases are never sampled: they shift every key score of a
/// query by the same amount, so their exact gradient is zero and the relative
/// error of a zero against rounding noise is meaningless.
inline bool structurally_zero_gradient(const std::string& name) {
  return name.size() >= 8 && name.compare(name.size() - 8, 8, ".attn.bk") == 0;
}

inline ModelGradCheck model_gradcheck(const ModelConfig& cfg, std::uint64_t seed, std::size_t coordinates = 50,
                                      std::size_t views = 2) {
  cfg.validate();
  ModelParams params = ModelParams::initialize(cfg, derive_seed(seed, {0x9c}));
  Rng rng(derive_seed(seed, {0x9d}));
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params.specs()[i].init == Init::zeros) {
      std::vector<double> jitter(params[i].numel());
      for (double& x : jitter) x = rng.normal(0.0, 0.1);
      params.set(i, Tensor(params[i].shape(), std::move(jitter)));
    }
  const auto label = static_cast<std::uint32_t>(rng.below(cfg.num_classes));
  Shape shape = apply_pose_regime(generate_shape(label, rng.next_u64(), cfg.num_classes), PoseRegime::rotated,
                                  rng.next_u64());
  const MultiViewSample sample = make_sample(shape, sample_viewpoints_random(views, rng.next_u64()), cfg.resolution);
  const std::vector<Tensor> inputs = prepare_views(sample, {});

  const ModelConfig config = cfg;
  const ParamLayout layout = params.layout();
  ScalarGraph f = [&](Tape& tape, std::span<const Var> vars) {
    return build_graph(tape, config, layout, vars, inputs, label, LossOptions{}).loss.total;
  };

  std::vector<Coordinate> pool;
  const auto& tensors = params.tensors();
  for (std::size_t p = 0; p < tensors.size(); ++p)
    if (!structurally_zero_gradient(params.name(p)))
      for (std::size_t e = 0; e < tensors[p].numel(); ++e) pool.push_back({p, e});
  rng.shuffle(std::span<Coordinate>(pool));
  std::vector<Coordinate> coords(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(coordinates, pool.size())));
  ModelGradCheck out;
  out.views = views;
  out.report = finite_diff_check(f, tensors, 1e-5, std::span<const Coordinate>(coords));
  return out;
}

}  // namespace panet
