#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "panet/errors.hpp"
#include "panet/io/binary.hpp"
#include "panet/rng.hpp"
#include "panet/shapegen/image.hpp"
#include "panet/shapegen/render.hpp"
#include "panet/shapegen/shape.hpp"
#include "panet/shapegen/viewpoints.hpp"

namespace panet {

inline constexpr std::size_t kMaxViews = 20;

struct MultiViewSample {
  std::uint32_t label = 0;
  std::vector<Vec3> viewpoints;
  std::vector<Image> views;

  std::size_t view_count() const { return views.size(); }
  friend bool operator==(const MultiViewSample&, const MultiViewSample&) = default;
};

struct Dataset {
  std::uint32_t num_classes = 0;
  std::uint32_t resolution = 0;
  std::vector<MultiViewSample> samples;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class Regime { aligned, rotated, arbitrary };

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::aligned: return "aligned";
    case Regime::rotated: return "rotated";
    case Regime::arbitrary: return "arbitrary";
  }
  return "?";
}

inline std::string_view to_string(ViewSampler s) { return s == ViewSampler::random ? "random" : "fps"; }

inline Regime parse_regime(std::string_view s) {
  if (s == "aligned") return Regime::aligned;
  if (s == "rotated") return Regime::rotated;
  if (s == "arbitrary") return Regime::arbitrary;
  throw UsageError("unknown regime '" + std::string(s) + "' (expected aligned, rotated or arbitrary)");
}

inline ViewSampler parse_sampler(std::string_view s) {
  if (s == "random") return ViewSampler::random;
  if (s == "fps") return ViewSampler::fps;
  throw UsageError("unknown sampler '" + std::string(s) + "' (expected random or fps)");
}

struct DatasetSpec {
  Regime regime = Regime::arbitrary;
  ViewSampler sampler = ViewSampler::random;
  std::vector<std::size_t> counts;  // objects per class, one entry per class
  std::uint32_t resolution = 32;
  std::uint64_t seed = 0;
  // View-count range for the arbitrary regime.
  std::size_t min_views = 10;
  std::size_t max_views = 20;
  // Size of the random candidate pool furthest-point sampling draws from.
  std::size_t fps_candidates = 256;
};

// Fixed-viewpoint protocol for the aligned and rotated regimes.
inline constexpr std::size_t kRingViews = 12;
inline constexpr double kRingElevationDeg = 30.0;

inline std::vector<Vec3> draw_viewpoints(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.regime != Regime::arbitrary) return viewpoint_ring(kRingViews, kRingElevationDeg);
  Rng rng(derive_seed(seed, {0xc0417}));
  const std::size_t v = rng.between(spec.min_views, spec.max_views);
  if (spec.sampler == ViewSampler::random) return sample_viewpoints_random(v, derive_seed(seed, {1}));
  const auto pool = sample_viewpoints_random(spec.fps_candidates, derive_seed(seed, {2}));
  return sample_viewpoints_fps(pool, v, rng.below(pool.size()));
}

inline MultiViewSample make_sample(const Shape& shape, std::vector<Vec3> viewpoints, std::uint32_t resolution) {
  MultiViewSample s;
  s.label = shape.class_id;
  s.views.reserve(viewpoints.size());
  for (const Vec3& vp : viewpoints) s.views.push_back(render_view(shape, vp, resolution));
  s.viewpoints = std::move(viewpoints);
  return s;
}

inline Dataset build_dataset(const DatasetSpec& spec) {
  const auto k = static_cast<std::uint32_t>(spec.counts.size());
  if (k == 0 || k > kNumPrimitiveKinds) throw UsageError("build_dataset: class count must be in [1, 6]");
  for (std::size_t c : spec.counts)
    if (c == 0) throw UsageError("build_dataset: every class needs at least one object");
  if (spec.regime == Regime::arbitrary &&
      (spec.min_views == 0 || spec.min_views > spec.max_views || spec.max_views > kMaxViews))
    throw UsageError("build_dataset: view range must satisfy 1 <= min <= max <= 20");
  if (spec.sampler == ViewSampler::fps && spec.fps_candidates < spec.max_views)
    throw UsageError("build_dataset: fps candidate pool smaller than max view count");

  Dataset ds;
  ds.num_classes = k;
  ds.resolution = spec.resolution;
  for (std::uint32_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < spec.counts[c]; ++i) {
      const std::uint64_t object_seed = derive_seed(spec.seed, {c, i});
      Shape shape = generate_shape(c, object_seed, k);
      const PoseRegime pose = spec.regime == Regime::aligned ? PoseRegime::aligned : PoseRegime::rotated;
      shape = apply_pose_regime(std::move(shape), pose, object_seed);
      ds.samples.push_back(make_sample(shape, draw_viewpoints(spec, object_seed), spec.resolution));
    }
  return ds;
}

// ---------------------------------------------------------------------------
// File format: "PANETDS1", u32 version, K, R, sample count; then per sample
// u32 label, u32 v, v x 3 f64 viewpoints, v x R x R f32 pixels. Little-endian.

inline constexpr std::string_view kDatasetMagic = "PANETDS1";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void validate_sample(const MultiViewSample& s, std::uint32_t k, std::uint32_t r, const std::string& where) {
  if (s.label >= k) throw FormatError(where + ": label " + std::to_string(s.label) + " outside [0, K)");
  if (s.views.empty() || s.views.size() > kMaxViews)
    throw FormatError(where + ": view count " + std::to_string(s.views.size()) + " outside [1, 20]");
  if (s.viewpoints.size() != s.views.size()) throw FormatError(where + ": viewpoint/view count mismatch");
  for (const Vec3& vp : s.viewpoints)
    if (std::abs(norm(vp) - 1.0) > 1e-9) throw FormatError(where + ": viewpoint is not unit length");
  for (const Image& img : s.views) {
    if (img.size != r) throw FormatError(where + ": image resolution mismatch");
    for (float p : img.pixels)
      if (!(p >= 0.0f && p <= 1.0f)) throw FormatError(where + ": pixel outside [0, 1]");
  }
}

inline std::vector<char> encode_dataset(const Dataset& ds) {
  io::ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(ds.num_classes);
  w.u32(ds.resolution);
  w.u32(static_cast<std::uint32_t>(ds.samples.size()));
  for (const MultiViewSample& s : ds.samples) {
    w.u32(s.label);
    w.u32(static_cast<std::uint32_t>(s.views.size()));
    for (const Vec3& vp : s.viewpoints) {
      w.f64(vp.x);
      w.f64(vp.y);
      w.f64(vp.z);
    }
    for (const Image& img : s.views)
      for (float p : img.pixels) w.f32(p);
  }
  return w.buffer();
}

inline Dataset decode_dataset(const std::vector<char>& bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  if (r.bytes(kDatasetMagic.size()) != kDatasetMagic) throw FormatError(source + ": not a PANETDS1 dataset file");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion)
    throw FormatError(source + ": unsupported dataset version " + std::to_string(version));
  Dataset ds;
  ds.num_classes = r.u32();
  ds.resolution = r.u32();
  if (ds.num_classes == 0 || ds.resolution == 0) throw FormatError(source + ": zero K or R in header");
  const std::uint32_t count = r.u32();
  ds.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    MultiViewSample s;
    s.label = r.u32();
    const std::uint32_t v = r.u32();
    if (v == 0 || v > kMaxViews) throw FormatError(source + ": sample " + std::to_string(i) + " has view count " + std::to_string(v));
    for (std::uint32_t j = 0; j < v; ++j) {
      Vec3 vp;
      vp.x = r.f64();
      vp.y = r.f64();
      vp.z = r.f64();
      s.viewpoints.push_back(vp);
    }
    for (std::uint32_t j = 0; j < v; ++j) {
      Image img(ds.resolution);
      for (float& p : img.pixels) p = r.f32();
      s.views.push_back(std::move(img));
    }
    validate_sample(s, ds.num_classes, ds.resolution, source + ": sample " + std::to_string(i));
    ds.samples.push_back(std::move(s));
  }
  if (!r.at_end()) throw FormatError(source + ": trailing bytes after last sample");
  return ds;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_dataset(ds));
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path), path.string());
}

}  // namespace panet
