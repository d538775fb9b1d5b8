#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "panet/errors.hpp"
#include "panet/rng.hpp"
#include "panet/shapegen/geometry.hpp"

namespace panet {

enum class PrimitiveKind { sphere, box, cylinder, cone, torus, composite };

inline constexpr std::size_t kNumPrimitiveKinds = 6;

inline std::string_view to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::sphere: return "sphere";
    case PrimitiveKind::box: return "box";
    case PrimitiveKind::cylinder: return "cylinder";
    case PrimitiveKind::cone: return "cone";
    case PrimitiveKind::torus: return "torus";
    case PrimitiveKind::composite: return "composite";
  }
  return "?";
}

struct SizeRange {
  double lo;
  double hi;
};

// Per-class ranges of the size parameters. Parameter meaning by kind:
//   sphere     radius
//   box        half extents x, y, z
//   cylinder   radius, half height (axis z)
//   cone       base radius, half height (axis z, apex at +z)
//   torus      major radius, minor radius (ring in the xy plane)
//   composite  box half extents x, y, z, then the radius of a sphere
//              resting on the box's +z face
inline const std::vector<SizeRange>& size_ranges(PrimitiveKind kind) {
  static const std::array<std::vector<SizeRange>, kNumPrimitiveKinds> table{{
      {{0.5, 1.0}},
      {{0.35, 0.9}, {0.35, 0.9}, {0.35, 0.9}},
      {{0.3, 0.8}, {0.35, 0.9}},
      {{0.35, 0.9}, {0.4, 1.0}},
      {{0.5, 0.85}, {0.12, 0.3}},
      {{0.3, 0.6}, {0.3, 0.6}, {0.3, 0.6}, {0.25, 0.5}},
  }};
  return table[static_cast<std::size_t>(kind)];
}

struct Shape {
  std::uint32_t class_id = 0;
  PrimitiveKind kind = PrimitiveKind::sphere;
  std::vector<double> size;
  Quat pose;

  friend bool operator==(const Shape&, const Shape&) = default;
};

inline Shape make_shape(std::uint32_t class_id, PrimitiveKind kind, std::vector<double> size,
                        Quat pose = Quat::identity()) {
  if (size.size() != size_ranges(kind).size())
    throw UsageError(std::string("shape ") + std::string(to_string(kind)) + ": expected " +
                     std::to_string(size_ranges(kind).size()) + " size parameters");
  for (double s : size)
    if (!(s > 0.0)) throw UsageError("shape size parameters must be strictly positive");
  if (std::abs(pose.norm() - 1.0) > 1e-9) throw UsageError("shape pose must be a unit quaternion");
  return Shape{class_id, kind, std::move(size), pose};
}

/// Class c maps to primitive family c; sizes are drawn uniformly from the
/// class's ranges, deterministically in (class_id, seed).
inline Shape generate_shape(std::uint32_t class_id, std::uint64_t seed,
                            std::uint32_t num_classes = kNumPrimitiveKinds) {
  if (num_classes == 0 || num_classes > kNumPrimitiveKinds)
    throw UsageError("generate_shape: class count must be in [1, 6]");
  if (class_id >= num_classes)
    throw UsageError("generate_shape: unknown class " + std::to_string(class_id));
  const auto kind = static_cast<PrimitiveKind>(class_id);
  Rng rng(derive_seed(seed, {0x5ea9e, class_id}));
  std::vector<double> size;
  for (const SizeRange& r : size_ranges(kind)) size.push_back(rng.uniform(r.lo, r.hi));
  return make_shape(class_id, kind, std::move(size));
}

enum class PoseRegime { aligned, rotated };

// Uniform rotation (Shoemake's subgroup method).
inline Quat random_rotation(Rng& rng) {
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  return Quat{b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3)}.normalized();
}

inline Shape apply_pose_regime(Shape shape, PoseRegime regime, std::uint64_t seed) {
  if (regime == PoseRegime::aligned) {
    shape.pose = Quat::identity();
  } else {
    Rng rng(derive_seed(seed, {0x9053}));
    shape.pose = random_rotation(rng);
  }
  return shape;
}

// ---------------------------------------------------------------------------
// Signed distance functions, evaluated in the shape's local frame.

namespace sdf {

inline double sphere(Vec3 p, double r) { return norm(p) - r; }

inline double box(Vec3 p, Vec3 half) {
  const Vec3 q = abs(p) - half;
  return norm(max(q, 0.0)) + std::min(std::max({q.x, q.y, q.z}), 0.0);
}

inline double cylinder(Vec3 p, double r, double h) {
  const double dx = std::hypot(p.x, p.y) - r;
  const double dz = std::abs(p.z) - h;
  return std::min(std::max(dx, dz), 0.0) + std::hypot(std::max(dx, 0.0), std::max(dz, 0.0));
}

// Cone with base radius r at z = -h and apex at z = +h.
inline double cone(Vec3 p, double r, double h) {
  const double qx = std::hypot(p.x, p.y), qy = p.z;
  const double k1x = 0.0, k1y = h;
  const double k2x = -r, k2y = 2.0 * h;
  const double cax = qx - std::min(qx, qy < 0.0 ? r : 0.0);
  const double cay = std::abs(qy) - h;
  const double t = std::clamp(((k1x - qx) * k2x + (k1y - qy) * k2y) / (k2x * k2x + k2y * k2y), 0.0, 1.0);
  const double cbx = qx - k1x + k2x * t;
  const double cby = qy - k1y + k2y * t;
  const double s = (cbx < 0.0 && cay < 0.0) ? -1.0 : 1.0;
  return s * std::sqrt(std::min(cax * cax + cay * cay, cbx * cbx + cby * cby));
}

inline double torus(Vec3 p, double major, double minor) {
  return std::hypot(std::hypot(p.x, p.y) - major, p.z) - minor;
}

}  // namespace sdf

inline double signed_distance_local(const Shape& s, Vec3 p) {
  const auto& z = s.size;
  switch (s.kind) {
    case PrimitiveKind::sphere: return sdf::sphere(p, z[0]);
    case PrimitiveKind::box: return sdf::box(p, {z[0], z[1], z[2]});
    case PrimitiveKind::cylinder: return sdf::cylinder(p, z[0], z[1]);
    case PrimitiveKind::cone: return sdf::cone(p, z[0], z[1]);
    case PrimitiveKind::torus: return sdf::torus(p, z[0], z[1]);
    case PrimitiveKind::composite: {
      const double base = sdf::box(p, {z[0], z[1], z[2]});
      const double top = sdf::sphere(p - Vec3{0.0, 0.0, z[2] + 0.5 * z[3]}, z[3]);
      return std::min(base, top);
    }
  }
  return 0.0;
}

// Distance bound in world coordinates (pose applied).
inline double signed_distance(const Shape& s, Vec3 world) {
  return signed_distance_local(s, s.pose.conjugate().rotate(world));
}

// Radius of an origin-centred ball containing the shape; rotation invariant.
inline double bounding_radius(const Shape& s) {
  const auto& z = s.size;
  switch (s.kind) {
    case PrimitiveKind::sphere: return z[0];
    case PrimitiveKind::box: return norm({z[0], z[1], z[2]});
    case PrimitiveKind::cylinder: return std::hypot(z[0], z[1]);
    case PrimitiveKind::cone: return std::hypot(z[0], z[1]);
    case PrimitiveKind::torus: return z[0] + z[1];
    case PrimitiveKind::composite: return std::max(norm({z[0], z[1], z[2]}), z[2] + 1.5 * z[3]);
  }
  return 0.0;
}

}  // namespace panet
