#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>

#include "panet/errors.hpp"
#include "panet/shapegen/geometry.hpp"
#include "panet/shapegen/image.hpp"
#include "panet/shapegen/shape.hpp"

namespace panet {

// Orthographic camera looking at the origin from `viewpoint` (unit vector).
struct Camera {
  Vec3 position;
  Vec3 forward;
  Vec3 right;
  Vec3 up;
  double distance;      // from origin, 3x bounding radius
  double half_extent;   // image plane spans [-half_extent, half_extent]^2
};

inline constexpr double kCameraDistanceFactor = 3.0;
inline constexpr double kImageExtentFactor = 1.05;

inline Camera make_camera(Vec3 viewpoint, double bounding_radius) {
  if (std::abs(norm(viewpoint) - 1.0) > 1e-9) throw UsageError("render: viewpoint must be a unit vector");
  Camera cam;
  cam.distance = kCameraDistanceFactor * bounding_radius;
  cam.half_extent = kImageExtentFactor * bounding_radius;
  cam.position = viewpoint * cam.distance;
  cam.forward = viewpoint * -1.0;
  // World +z is "up" unless the view is (nearly) vertical, then world +y.
  const Vec3 hint = std::abs(viewpoint.z) > 0.999 ? Vec3{0.0, 1.0, 0.0} : Vec3{0.0, 0.0, 1.0};
  cam.right = normalized(cross(cam.forward, hint));
  cam.up = cross(cam.right, cam.forward);
  return cam;
}

// Image-plane coordinate of a pixel centre, in world units along right/up.
inline double pixel_plane_u(const Camera& cam, std::size_t col, std::uint32_t r) {
  return cam.half_extent * ((static_cast<double>(col) + 0.5) / r * 2.0 - 1.0);
}
inline double pixel_plane_v(const Camera& cam, std::size_t row, std::uint32_t r) {
  return cam.half_extent * (1.0 - (static_cast<double>(row) + 0.5) / r * 2.0);
}

/// Sphere-traced orthographic depth image. Background pixels are 0; a hit at
/// depth t maps to 1 - 0.75 * (t - t_near) / (t_far - t_near), where
/// [t_near, t_far] is the bounding ball's depth span, so object pixels lie
/// in [0.25, 1] with nearer surfaces brighter.
inline Image render_view(const Shape& shape, Vec3 viewpoint, std::uint32_t resolution) {
  if (resolution == 0) throw UsageError("render: resolution must be positive");
  const double rb = bounding_radius(shape);
  const Camera cam = make_camera(viewpoint, rb);
  const double t_near = cam.distance - rb;
  const double t_far = cam.distance + rb;
  const double hit_eps = 1e-4 * rb;
  constexpr int kMaxSteps = 256;

  Image img(resolution);
  for (std::uint32_t row = 0; row < resolution; ++row) {
    const double v = pixel_plane_v(cam, row, resolution);
    for (std::uint32_t col = 0; col < resolution; ++col) {
      const double u = pixel_plane_u(cam, col, resolution);
      const Vec3 origin = cam.position + cam.right * u + cam.up * v;
      double t = t_near;
      for (int step = 0; step < kMaxSteps && t <= t_far; ++step) {
        const double d = signed_distance(shape, origin + cam.forward * t);
        if (d < hit_eps) {
          const double depth = std::clamp((t - t_near) / (t_far - t_near), 0.0, 1.0);
          img.at(row, col) = static_cast<float>(1.0 - 0.75 * depth);
          break;
        }
        t += d;
      }
    }
  }
  return img;
}

}  // namespace panet
