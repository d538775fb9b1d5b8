#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace panet {

// Square single-channel image, row-major, row 0 at the top.
struct Image {
  std::uint32_t size = 0;
  std::vector<float> pixels;

  Image() = default;
  explicit Image(std::uint32_t r, float fill = 0.0f) : size(r), pixels(std::size_t{r} * r, fill) {}

  float& at(std::size_t row, std::size_t col) { return pixels[row * size + col]; }
  float at(std::size_t row, std::size_t col) const { return pixels[row * size + col]; }

  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace panet
