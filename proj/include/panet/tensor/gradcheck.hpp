#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "panet/tensor/tape.hpp"
#include "panet/tensor/tensor.hpp"

namespace panet {

// Builds a scalar from parameter handles on the given tape.
using ScalarGraph = std::function<Var(Tape&, std::span<const Var>)>;

struct Coordinate {
  std::size_t param = 0;
  std::size_t element = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  Coordinate worst{};
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

inline double evaluate_scalar(const ScalarGraph& f, std::span<const Tensor> params, bool with_grad) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(with_grad ? tape.variable(p) : tape.constant(p));
  return f(tape, vars).value().item();
}

/// Compares reverse-mode gradients against central differences
/// (f(p+h) - f(p-h)) / 2h. Checks every coordinate unless a subset is given.
inline GradCheckReport finite_diff_check(const ScalarGraph& f, std::span<const Tensor> params,
                                         double step = 1e-5,
                                         std::optional<std::span<const Coordinate>> subset = {}) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.variable(p));
  Var loss = f(tape, vars);
  Gradients grads = tape.backward(loss);

  std::vector<Coordinate> coords;
  if (subset) {
    coords.assign(subset->begin(), subset->end());
  } else {
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t e = 0; e < params[p].numel(); ++e) coords.push_back({p, e});
  }

  GradCheckReport report;
  std::vector<Tensor> shifted(params.begin(), params.end());
  for (const Coordinate& c : coords) {
    const Tensor& base = params[c.param];
    auto with_offset = [&](double delta) {
      std::vector<double> data = base.to_vector();
      data[c.element] += delta;
      shifted[c.param] = Tensor(base.shape(), std::move(data));
      return evaluate_scalar(f, shifted, false);
    };
    const double plus = with_offset(step);
    const double minus = with_offset(-step);
    shifted[c.param] = base;
    const double numeric = (plus - minus) / (2.0 * step);
    const double analytic = grads[vars[c.param]][c.element];
    const double err = relative_error(analytic, numeric);
    if (err > report.max_relative_error || report.checked == 0) {
      report.max_relative_error = err;
      report.worst = c;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
    ++report.checked;
  }
  return report;
}

}  // namespace panet
