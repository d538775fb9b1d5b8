#pragma once

// Scripted desk-scale sweeps. Every cell trains from scratch on its own
// train/test split for each seed; a "mean" row follows each setting.

#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "panet/errors.hpp"
#include "panet/train/trainer.hpp"

namespace panet {

enum class AblationSuite { component, attention_M, parts_L, sampler };

inline std::string_view to_string(AblationSuite s) {
  switch (s) {
    case AblationSuite::component: return "component";
    case AblationSuite::attention_M: return "attention_M";
    case AblationSuite::parts_L: return "parts_L";
    case AblationSuite::sampler: return "sampler";
  }
  return "?";
}

inline AblationSuite parse_suite(std::string_view s) {
  for (auto v : {AblationSuite::component, AblationSuite::attention_M, AblationSuite::parts_L, AblationSuite::sampler})
    if (s == to_string(v)) return v;
  throw UsageError("unknown ablation suite '" + std::string(s) + "' (component, attention_M, parts_L, sampler)");
}

struct AblationSetting {
  std::string name;
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
};

/// The grid of a suite, derived from a base configuration. The component
/// suite starts from a baseline without CVA or the part-aware loss and adds
/// each one separately.
inline std::vector<AblationSetting> ablation_settings(AblationSuite suite, const ModelConfig& model,
                                                      const TrainConfig& train, const DataConfig& data) {
  std::vector<AblationSetting> out;
  auto add = [&](std::string name, auto&& edit) {
    AblationSetting s{std::move(name), model, train, data};
    edit(s);
    s.model.validate();
    out.push_back(std::move(s));
  };
  switch (suite) {
    case AblationSuite::component:
      add("baseline", [](AblationSetting& s) { s.model.use_cva = false; s.train.gamma = 0.0; });
      add("+CVA", [](AblationSetting& s) { s.model.use_cva = true; s.train.gamma = 0.0; });
      add("+L_awe", [&](AblationSetting& s) {
        s.model.use_cva = false;
        s.train.gamma = train.gamma > 0.0 ? train.gamma : 1.0;
      });
      break;
    case AblationSuite::attention_M:
      for (std::uint32_t m : {16u, 32u, 64u, 128u})
        add("M=" + std::to_string(m), [m](AblationSetting& s) { s.model.attention_maps = m; });
      break;
    case AblationSuite::parts_L:
      for (std::uint32_t l : {1u, 8u, 16u, 32u})
        add("L=" + std::to_string(l), [l](AblationSetting& s) { s.model.part_tokens = l; });
      break;
    case AblationSuite::sampler:
      add("random", [](AblationSetting& s) { s.data.sampler = ViewSampler::random; });
      add("fps", [](AblationSetting& s) { s.data.sampler = ViewSampler::fps; });
      break;
  }
  return out;
}

struct AblationRow {
  std::string suite;
  std::string setting;
  std::string seed;  // decimal seed, or "mean"
  double per_class_acc = 0.0;
  double per_instance_acc = 0.0;
  std::size_t epochs = 0;
  double wall_seconds = 0.0;
};

using AblationProgress = std::function<void(const AblationRow&)>;

inline std::vector<AblationRow> run_ablation(AblationSuite suite, const ModelConfig& model, const TrainConfig& train,
                                             const DataConfig& data, const std::vector<std::uint64_t>& seeds,
                                             const AblationProgress& progress = {}) {
  if (seeds.empty()) throw UsageError("run_ablation: no seeds");
  std::vector<AblationRow> rows;
  for (const AblationSetting& s : ablation_settings(suite, model, train, data)) {
    AblationRow mean{std::string(to_string(suite)), s.name, "mean", 0, 0, s.train.epochs, 0};
    for (std::uint64_t seed : seeds) {
      const ExperimentResult r = run_experiment(s.model, s.train, s.data, seed);
      AblationRow row{mean.suite, s.name, std::to_string(seed), r.test.per_class_acc, r.test.per_instance_acc,
                      s.train.epochs, r.wall_seconds};
      mean.per_class_acc += row.per_class_acc;
      mean.per_instance_acc += row.per_instance_acc;
      mean.wall_seconds += row.wall_seconds;
      if (progress) progress(row);
      rows.push_back(std::move(row));
    }
    const double n = static_cast<double>(seeds.size());
    mean.per_class_acc /= n;
    mean.per_instance_acc /= n;
    mean.wall_seconds /= n;
    if (progress) progress(mean);
    rows.push_back(std::move(mean));
  }
  return rows;
}

inline constexpr std::string_view kAblationCsvHeader =
    "suite,setting,seed,per_class_acc,per_instance_acc,epochs,wall_seconds";

inline std::string ablation_csv_row(const AblationRow& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%zu,%.3f", r.per_class_acc, r.per_instance_acc, r.epochs,
                r.wall_seconds);
  return r.suite + "," + r.setting + "," + r.seed + buf;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out(kAblationCsvHeader);
  out += '\n';
  for (const auto& r : rows) out += ablation_csv_row(r) + '\n';
  return out;
}

}  // namespace panet
