#pragma once

// Deliberately naive reference implementations, shared by the unit tests and
// the acceptance run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "panet/shapegen/geometry.hpp"

namespace panet::testing {

// Greedy furthest-point selection recomputed from scratch at every step.
inline std::vector<std::size_t> fps_oracle(const std::vector<Vec3>& c, std::size_t n, std::size_t start) {
  std::vector<std::size_t> chosen{start};
  while (chosen.size() < n) {
    std::size_t best = c.size();
    double best_d = -1.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
      double d = std::numeric_limits<double>::infinity();
      for (std::size_t j : chosen) d = std::min(d, std::acos(std::clamp(dot(c[i], c[j]), -1.0, 1.0)));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

inline std::vector<Vec3> pick(const std::vector<Vec3>& c, const std::vector<std::size_t>& idx) {
  std::vector<Vec3> out;
  for (std::size_t i : idx) out.push_back(c[i]);
  return out;
}

// Instance and class-mean accuracy counted class by class from raw lists.
inline std::pair<double, double> accuracy_oracle(const std::vector<std::uint32_t>& y,
                                                 const std::vector<std::uint32_t>& p, std::uint32_t k) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += y[i] == p[i];
  double recall = 0.0;
  std::size_t present = 0;
  for (std::uint32_t c = 0; c < k; ++c) {
    std::size_t n = 0, ok = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == c) {
        ++n;
        ok += p[i] == c;
      }
    if (n) {
      recall += double(ok) / double(n);
      ++present;
    }
  }
  return {double(hit) / double(y.size()), recall / double(present)};
}

// confusion[true][pred] by direct counting.
inline std::vector<std::vector<std::size_t>> confusion_oracle(const std::vector<std::uint32_t>& y,
                                                              const std::vector<std::uint32_t>& p, std::uint32_t k) {
  std::vector<std::vector<std::size_t>> m(k, std::vector<std::size_t>(k, 0));
  for (std::uint32_t t = 0; t < k; ++t)
    for (std::uint32_t q = 0; q < k; ++q)
      for (std::size_t i = 0; i < y.size(); ++i) m[t][q] += y[i] == t && p[i] == q;
  return m;
}

}  // namespace panet::testing
