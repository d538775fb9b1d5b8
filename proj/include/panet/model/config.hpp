#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "panet/errors.hpp"

namespace panet {

struct ModelConfig {
  std::uint32_t num_classes = 6;     // K
  std::uint32_t resolution = 32;     // R, input views are R x R
  std::uint32_t channels = 64;       // C, width of view features and parts
  std::uint32_t attention_maps = 64; // M, attention maps per view
  std::uint32_t part_tokens = 16;    // L, global parts
  std::uint32_t depth = 1;           // D, refinement layers
  std::uint32_t heads = 4;           // h
  std::uint32_t mlp_ratio = 4;       // hidden width = mlp_ratio * C
  // Output widths of the first three encoder blocks; the fourth emits C.
  std::array<std::uint32_t, 3> encoder_widths{16, 32, 64};
  bool use_cva = true;

  static ModelConfig defaults() { return {}; }

  // Small enough for exhaustive finite-difference checks.
  static ModelConfig tiny() {
    ModelConfig c;
    c.num_classes = 3;
    c.channels = 4;
    c.attention_maps = 3;
    c.part_tokens = 2;
    c.depth = 2;
    c.heads = 2;
    c.encoder_widths = {2, 3, 4};
    return c;
  }

  static constexpr std::size_t kEncoderBlocks = 4;

  // Spatial extent of encoder output: four stride-2 blocks.
  std::size_t feature_extent() const { return resolution / 16; }

  void validate() const {
    if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
    if (resolution < 16 || resolution % 16 != 0)
      throw ConfigError("model: resolution must be a positive multiple of 16");
    if (channels < 2 || attention_maps == 0 || part_tokens == 0 || depth == 0 || mlp_ratio == 0)
      throw ConfigError("model: C >= 2 and M, L, D, mlp_ratio >= 1 required");
    if (heads == 0 || channels % heads != 0)
      throw ConfigError("model: channels " + std::to_string(channels) + " not divisible by " +
                        std::to_string(heads) + " heads");
    for (auto w : encoder_widths)
      if (w == 0) throw ConfigError("model: encoder widths must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace panet
