#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "panet/errors.hpp"
#include "panet/rng.hpp"
#include "panet/shapegen/geometry.hpp"

namespace panet {

enum class ViewSampler { random, fps };

inline std::vector<Vec3> sample_viewpoints_random(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw UsageError("sample_viewpoints_random: n must be at least 1");
  Rng rng(derive_seed(seed, {0x7157}));
  std::vector<Vec3> out;
  out.reserve(n);
  while (out.size() < n) {
    Vec3 g{rng.normal(), rng.normal(), rng.normal()};
    const double len = norm(g);
    if (len < 1e-12) continue;
    out.push_back(g * (1.0 / len));
  }
  return out;
}

/// Greedy furthest-point selection by geodesic distance. Each step takes the
/// unselected candidate whose distance to the selected set is largest; ties
/// go to the lowest index.
inline std::vector<Vec3> sample_viewpoints_fps(std::span<const Vec3> candidates, std::size_t n,
                                              std::size_t start_index) {
  if (n > candidates.size())
    throw UsageError("sample_viewpoints_fps: requested " + std::to_string(n) + " of " +
                     std::to_string(candidates.size()) + " candidates");
  if (n == 0) return {};
  if (start_index >= candidates.size()) throw UsageError("sample_viewpoints_fps: start index out of range");

  std::vector<double> nearest(candidates.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> taken(candidates.size(), false);
  std::vector<Vec3> out;
  out.reserve(n);
  std::size_t pick = start_index;
  for (;;) {
    taken[pick] = true;
    out.push_back(candidates[pick]);
    if (out.size() == n) break;
    for (std::size_t i = 0; i < candidates.size(); ++i)
      nearest[i] = std::min(nearest[i], geodesic_distance(candidates[i], candidates[pick]));
    std::size_t best = candidates.size();
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (!taken[i] && (best == candidates.size() || nearest[i] > nearest[best])) best = i;
    pick = best;
  }
  return out;
}

// `count` viewpoints equally spaced in azimuth at a fixed elevation (z up).
inline std::vector<Vec3> viewpoint_ring(std::size_t count, double elevation_deg) {
  const double el = elevation_deg * std::numbers::pi / 180.0;
  std::vector<Vec3> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double az = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
    out.push_back(normalized(Vec3{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)}));
  }
  return out;
}

}  // namespace panet
