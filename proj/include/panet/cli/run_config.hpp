#pragma once

// Flat key/value run configuration shared by every command. A config is a
// preset name ("default", "tiny") or a JSON object file; individual keys in
// the file override the default preset and command-line flags override both.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "panet/errors.hpp"
#include "panet/io/binary.hpp"
#include "panet/model/config.hpp"
#include "panet/train/config.hpp"

namespace panet::cli {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::uint64_t seed = 0;

  static RunConfig defaults() { return {}; }

  // Small model and data for smoke runs and gradient checks.
  static RunConfig tiny() {
    RunConfig r;
    r.model = ModelConfig::tiny();
    r.data.num_classes = r.model.num_classes;
    r.data.train_per_class = 4;
    r.data.test_per_class = 2;
    r.data.min_views = 2;
    r.data.max_views = 4;
    r.train.epochs = 2;
    r.train.batch_size = 4;
    return r;
  }

  void validate() const {
    model.validate();
    train.validate();
    if (data.num_classes != model.num_classes || data.resolution != model.resolution)
      throw ConfigError("config: data K/R must match model K/R");
    if (data.min_views == 0 || data.min_views > data.max_views || data.max_views > kMaxViews)
      throw ConfigError("config: view range must satisfy 1 <= min_views <= max_views <= 20");
    if (data.train_per_class == 0 || data.test_per_class == 0)
      throw ConfigError("config: per-class counts must be positive");
  }
};

using nlohmann::json;

inline json to_json(const RunConfig& r) {
  json j = to_json(r.model);
  const json train = to_json(r.train), data = to_json(r.data);
  for (const auto& [k, v] : train.items()) j[k] = v;
  for (const auto& [k, v] : data.items()) j[k] = v;
  j["seed"] = r.seed;
  return j;
}

namespace detail {

template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: key '" + key + "' has the wrong type");
  }
}

inline std::uint32_t get_u32(const json& v, const std::string& key) {
  if (!v.is_number_unsigned()) throw ConfigError("config: key '" + key + "' must be a non-negative integer");
  return get_as<std::uint32_t>(v, key);
}

inline std::size_t get_size(const json& v, const std::string& key) {
  if (!v.is_number_unsigned()) throw ConfigError("config: key '" + key + "' must be a non-negative integer");
  return get_as<std::size_t>(v, key);
}

inline double get_real(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config: key '" + key + "' must be a number");
  return v.get<double>();
}

inline bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError("config: key '" + key + "' must be true or false");
  return v.get<bool>();
}

}  // namespace detail

/// Applies every key of a flat JSON object; unknown keys are rejected.
inline void apply_json(RunConfig& r, const json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "K") r.model.num_classes = r.data.num_classes = get_u32(v, key);
    else if (key == "R") r.model.resolution = r.data.resolution = get_u32(v, key);
    else if (key == "C") r.model.channels = get_u32(v, key);
    else if (key == "M") r.model.attention_maps = get_u32(v, key);
    else if (key == "L") r.model.part_tokens = get_u32(v, key);
    else if (key == "D") r.model.depth = get_u32(v, key);
    else if (key == "heads") r.model.heads = get_u32(v, key);
    else if (key == "mlp_ratio") r.model.mlp_ratio = get_u32(v, key);
    else if (key == "encoder_widths") {
      if (!v.is_array() || v.size() != 3) throw ConfigError("config: encoder_widths must list 3 widths");
      for (std::size_t i = 0; i < 3; ++i) r.model.encoder_widths[i] = get_u32(v[i], key);
    } else if (key == "use_cva") r.model.use_cva = get_bool(v, key);
    else if (key == "learning_rate") r.train.optimizer.learning_rate = get_real(v, key);
    else if (key == "beta1") r.train.optimizer.beta1 = get_real(v, key);
    else if (key == "beta2") r.train.optimizer.beta2 = get_real(v, key);
    else if (key == "weight_decay") r.train.optimizer.weight_decay = get_real(v, key);
    else if (key == "epochs") r.train.epochs = get_size(v, key);
    else if (key == "batch_size") r.train.batch_size = get_size(v, key);
    else if (key == "gamma") r.train.gamma = get_real(v, key);
    else if (key == "smoothing") r.train.smoothing = get_real(v, key);
    else if (key == "augment") r.train.augment = get_bool(v, key);
    else if (key == "flip_prob") r.train.flip_prob = get_real(v, key);
    else if (key == "erase_prob") r.train.erase_prob = get_real(v, key);
    else if (key == "regime") r.data.regime = parse_regime(get_as<std::string>(v, key));
    else if (key == "sampler") r.data.sampler = parse_sampler(get_as<std::string>(v, key));
    else if (key == "train_per_class") r.data.train_per_class = get_size(v, key);
    else if (key == "test_per_class") r.data.test_per_class = get_size(v, key);
    else if (key == "min_views") r.data.min_views = get_size(v, key);
    else if (key == "max_views") r.data.max_views = get_size(v, key);
    else if (key == "seed") r.seed = get_as<std::uint64_t>(v, key);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
}

/// Resolves `--config`: empty means the default preset, "tiny" and
/// "default" name presets, anything else is a JSON file path.
inline RunConfig load_run_config(const std::string& spec) {
  if (spec.empty() || spec == "default") return RunConfig::defaults();
  if (spec == "tiny") return RunConfig::tiny();
  const std::vector<char> bytes = io::read_file(spec);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + spec + ": " + e.what());
  }
  RunConfig r = RunConfig::defaults();
  if (j.contains("preset")) {
    const auto preset = detail::get_as<std::string>(j["preset"], "preset");
    if (preset == "tiny") r = RunConfig::tiny();
    else if (preset != "default") throw ConfigError("config: unknown preset '" + preset + "'");
    j.erase("preset");
  }
  apply_json(r, j);
  return r;
}

}  // namespace panet::cli
