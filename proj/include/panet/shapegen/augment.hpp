#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>

#include "panet/errors.hpp"
#include "panet/rng.hpp"
#include "panet/shapegen/image.hpp"

namespace panet {

struct EraseRect {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

inline Image flip_horizontal(const Image& img) {
  Image out(img.size);
  for (std::size_t r = 0; r < img.size; ++r)
    for (std::size_t c = 0; c < img.size; ++c) out.at(r, c) = img.at(r, img.size - 1 - c);
  return out;
}

inline Image erase_rect(Image img, const EraseRect& rect) {
  if (rect.row + rect.height > img.size || rect.col + rect.width > img.size)
    throw UsageError("erase_rect: rectangle outside the image");
  for (std::size_t r = rect.row; r < rect.row + rect.height; ++r)
    for (std::size_t c = rect.col; c < rect.col + rect.width; ++c) img.at(r, c) = 0.0f;
  return img;
}

// Random-erasing rectangle: area fraction in [0.02, 0.2], aspect ratio in
// [0.3, 3.3], placed uniformly. Gives up after 10 draws that do not fit.
inline std::optional<EraseRect> draw_erase_rect(std::uint32_t size, Rng& rng) {
  const double area = static_cast<double>(size) * size;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = rng.uniform(0.02, 0.2) * area;
    const double aspect = rng.uniform(0.3, 3.3);
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    if (h == 0 || w == 0 || h > size || w > size) continue;
    EraseRect rect;
    rect.height = h;
    rect.width = w;
    rect.row = rng.below(size - h + 1);
    rect.col = rng.below(size - w + 1);
    return rect;
  }
  return std::nullopt;
}

/// Training-time augmentation: horizontal flip with probability flip_prob,
/// then a zero-filled random rectangle with probability erase_prob.
inline Image augment(const Image& img, std::uint64_t seed, double flip_prob = 0.5,
                     double erase_prob = 0.5) {
  Rng rng(derive_seed(seed, {0xa096}));
  Image out = rng.bernoulli(flip_prob) ? flip_horizontal(img) : img;
  if (rng.bernoulli(erase_prob))
    if (auto rect = draw_erase_rect(out.size, rng)) out = erase_rect(std::move(out), *rect);
  return out;
}

}  // namespace panet
