#pragma once

// Qualitative analyses of a trained model: part-feature correlation and
// attention-map overlays written as 8-bit PGM images.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "panet/errors.hpp"
#include "panet/io/binary.hpp"
#include "panet/model/network.hpp"
#include "panet/shapegen/image.hpp"
#include "panet/tensor/tensor.hpp"

namespace panet {

/// Cosine similarity between every pair of rows of `parts` [L, C]. An all-zero
/// row correlates 1 with itself and 0 with everything else.
inline Tensor part_correlation(const Tensor& parts) {
  if (parts.rank() != 2) throw DimensionError("part_correlation: expected [L, C], got " + shape_str(parts.shape()));
  const std::size_t l = parts.shape()[0], c = parts.shape()[1];
  const double* p = parts.ptr();
  std::vector<double> norms(l, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += p[i * c + k] * p[i * c + k];
    norms[i] = std::sqrt(s);
  }
  std::vector<double> out(l * l, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    out[i * l + i] = 1.0;
    if (norms[i] == 0.0) continue;
    for (std::size_t j = i + 1; j < l; ++j) {
      if (norms[j] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < c; ++k) dot += p[i * c + k] * p[j * c + k];
      const double v = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
      out[i * l + j] = v;
      out[j * l + i] = v;
    }
  }
  return Tensor({l, l}, std::move(out));
}

/// Mean absolute off-diagonal entry of a square matrix.
inline double mean_offdiag(const Tensor& m) {
  if (m.rank() != 2 || m.shape()[0] != m.shape()[1])
    throw DimensionError("mean_offdiag: expected a square matrix, got " + shape_str(m.shape()));
  const std::size_t l = m.shape()[0];
  if (l < 2) throw UsageError("mean_offdiag: need at least 2 rows");
  double s = 0.0;
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j)
      if (i != j) s += std::abs(m[i * l + j]);
  return s / static_cast<double>(l * (l - 1));
}

inline std::string correlation_csv(const Tensor& m) {
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", m[i * cols + j]);
      if (j) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

/// Eval-mode mean_offdiag(part_correlation(global parts)) averaged over a
/// dataset. Lower means more diverse parts.
inline double part_diversity(const ModelParams& params, const Dataset& data) {
  if (data.samples.empty()) throw UsageError("part_diversity: empty dataset");
  double s = 0.0;
  for (const MultiViewSample& sample : data.samples)
    s += mean_offdiag(part_correlation(forward(params, sample).global_parts));
  return s / static_cast<double>(data.samples.size());
}

/// Indices of the `k` maps with the largest total mass in view `view` of
/// attention [v, H, W, M]; ties go to the lower index.
inline std::vector<std::size_t> top_attention_maps(const Tensor& attention, std::size_t view, std::size_t k) {
  const auto& s = attention.shape();
  const std::size_t hw = s[1] * s[2], m = s[3];
  std::vector<double> mass(m, 0.0);
  const double* a = attention.ptr() + view * hw * m;
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t j = 0; j < m; ++j) mass[j] += a[p * m + j];
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return mass[x] > mass[y]; });
  idx.resize(std::min(k, m));
  return idx;
}

/// Nearest-neighbour upsampling of map j of view i to R x R, min-max scaled to
/// 0..255. A constant map becomes all zeros.
inline Image attention_overlay(const Tensor& attention, std::size_t view, std::size_t map, std::uint32_t resolution) {
  const auto& s = attention.shape();
  const std::size_t h = s[1], w = s[2], m = s[3];
  const double* a = attention.ptr() + view * h * w * m;
  double lo = a[map], hi = a[map];
  for (std::size_t p = 0; p < h * w; ++p) {
    lo = std::min(lo, a[p * m + map]);
    hi = std::max(hi, a[p * m + map]);
  }
  Image img;
  img.size = resolution;
  img.pixels.assign(static_cast<std::size_t>(resolution) * resolution, 0.0f);
  for (std::uint32_t r = 0; r < resolution; ++r)
    for (std::uint32_t c = 0; c < resolution; ++c) {
      const std::size_t sr = std::min<std::size_t>(r * h / resolution, h - 1);
      const std::size_t sc = std::min<std::size_t>(c * w / resolution, w - 1);
      const double v = a[(sr * w + sc) * m + map];
      img.pixels[r * resolution + c] = hi > lo ? static_cast<float>(std::round(255.0 * (v - lo) / (hi - lo))) : 0.0f;
    }
  return img;
}

// Binary PGM of an image whose pixels are already in 0..255.
inline std::vector<char> encode_pgm(const Image& img) {
  const std::string header = "P5\n" + std::to_string(img.size) + " " + std::to_string(img.size) + "\n255\n";
  std::vector<char> out(header.begin(), header.end());
  for (float v : img.pixels) out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f))));
  return out;
}

/// Writes view{i}_part{j}.pgm for the top-4 maps of every view and returns the
/// paths written.
inline std::vector<std::filesystem::path> export_attention_overlays(const Tensor& attention, std::uint32_t resolution,
                                                                    const std::filesystem::path& out_dir,
                                                                    std::size_t per_view = 4) {
  if (attention.rank() != 4) throw DimensionError("export_attention_overlays: expected [v, H, W, M]");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (std::size_t i = 0; i < attention.shape()[0]; ++i)
    for (std::size_t j : top_attention_maps(attention, i, per_view)) {
      const auto path = out_dir / ("view" + std::to_string(i) + "_part" + std::to_string(j) + ".pgm");
      io::write_file_atomic(path, encode_pgm(attention_overlay(attention, i, j, resolution)));
      written.push_back(path);
    }
  return written;
}

}  // namespace panet
