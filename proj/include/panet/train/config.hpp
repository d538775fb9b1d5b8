#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "panet/errors.hpp"
#include "panet/model/config.hpp"
#include "panet/shapegen/dataset.hpp"
#include "panet/train/adamw.hpp"

namespace panet {

struct TrainConfig {
  AdamWConfig optimizer;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double gamma = 1.0;      // weight of the part-aware loss
  double smoothing = 0.1;  // label smoothing epsilon
  std::uint64_t seed = 0;
  bool augment = true;
  double flip_prob = 0.5;
  double erase_prob = 0.5;

  // Objective settings that train_epoch itself depends on.
  void validate_objective() const {
    if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("train: smoothing must lie in [0, 1)");
    if (!(gamma >= 0.0)) throw ConfigError("train: gamma must be non-negative");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (!(optimizer.learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be non-negative");
  }

  void validate() const {
    validate_objective();
    if (!(optimizer.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  }
};

// Synthetic benchmark definition: one train and one held-out split.
struct DataConfig {
  Regime regime = Regime::arbitrary;
  ViewSampler sampler = ViewSampler::random;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 30;
  std::uint32_t num_classes = 6;
  std::uint32_t resolution = 32;
  std::size_t min_views = 10;
  std::size_t max_views = 20;

  DatasetSpec split(std::size_t per_class, std::uint64_t seed) const {
    DatasetSpec s;
    s.regime = regime;
    s.sampler = sampler;
    s.counts.assign(num_classes, per_class);
    s.resolution = resolution;
    s.seed = seed;
    s.min_views = min_views;
    s.max_views = max_views;
    return s;
  }
};

using nlohmann::json;

inline json to_json(const ModelConfig& c) {
  return json{{"K", c.num_classes},
              {"R", c.resolution},
              {"C", c.channels},
              {"M", c.attention_maps},
              {"L", c.part_tokens},
              {"D", c.depth},
              {"heads", c.heads},
              {"mlp_ratio", c.mlp_ratio},
              {"encoder_widths", c.encoder_widths},
              {"use_cva", c.use_cva}};
}

inline json to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.optimizer.learning_rate},
              {"beta1", c.optimizer.beta1},
              {"beta2", c.optimizer.beta2},
              {"weight_decay", c.optimizer.weight_decay},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"gamma", c.gamma},
              {"smoothing", c.smoothing},
              {"seed", c.seed},
              {"augment", c.augment},
              {"flip_prob", c.flip_prob},
              {"erase_prob", c.erase_prob}};
}

inline json to_json(const DataConfig& c) {
  return json{{"regime", std::string(to_string(c.regime))},
              {"sampler", std::string(to_string(c.sampler))},
              {"train_per_class", c.train_per_class},
              {"test_per_class", c.test_per_class},
              {"K", c.num_classes},
              {"R", c.resolution},
              {"min_views", c.min_views},
              {"max_views", c.max_views}};
}

}  // namespace panet
