#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "panet/errors.hpp"
#include "panet/tensor/tensor.hpp"

namespace panet {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// First and second moment estimates, one buffer per parameter tensor.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState zeros_like(std::span<const Tensor> params) {
    AdamState s;
    for (const Tensor& p : params) {
      s.m.emplace_back(p.numel(), 0.0);
      s.v.emplace_back(p.numel(), 0.0);
    }
    return s;
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One decoupled-weight-decay Adam update:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
inline void adamw_step(std::vector<Tensor>& params, std::span<const Tensor> grads, AdamState& state,
                       const AdamWConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw UsageError("adamw_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].shape() != params[i].shape() || state.m[i].size() != params[i].numel() ||
        state.v[i].size() != params[i].numel())
      throw UsageError("adamw_step: shape mismatch at parameter " + std::to_string(i));

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = grads[i].data();
    const auto theta = params[i].data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    std::vector<double> next(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      next[j] = theta[j] - cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg.epsilon)) -
                cfg.learning_rate * cfg.weight_decay * theta[j];
    }
    params[i] = Tensor(params[i].shape(), std::move(next));
  }
}

}  // namespace panet
