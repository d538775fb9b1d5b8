#pragma once

// Command-line front end. run() returns the process exit code:
// 0 success, 1 runtime failure, 2 usage error.

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "panet/cli/run_config.hpp"
#include "panet/errors.hpp"
#include "panet/introspect/introspect.hpp"
#include "panet/io/binary.hpp"
#include "panet/model/gradcheck.hpp"
#include "panet/shapegen/dataset.hpp"
#include "panet/train/ablation.hpp"
#include "panet/train/checkpoint.hpp"
#include "panet/train/trainer.hpp"

namespace panet::cli {

inline constexpr const char* kVersion = "0.1.0";

inline std::string sha256_hex(const std::vector<char>& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

// A dataset together with the digest of the exact bytes it was decoded from.
struct LoadedDataset {
  Dataset data;
  std::string path;
  std::string sha256;
};

inline LoadedDataset load_dataset(const std::string& path) {
  const std::vector<char> bytes = io::read_file(path);
  return {decode_dataset(bytes, path), path, sha256_hex(bytes)};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  io::write_file_atomic(path, std::vector<char>(text.begin(), text.end()));
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

inline void write_manifest(const std::filesystem::path& path, const std::string& command, const json& config,
                           std::uint64_t seed, const std::vector<const LoadedDataset*>& inputs,
                           const json& outputs) {
  json m{{"tool", "panet"}, {"version", kVersion}, {"command", command}, {"seed", seed}, {"config", config}};
  json in = json::array();
  for (const LoadedDataset* d : inputs) in.push_back({{"path", d->path}, {"sha256", d->sha256}});
  m["inputs"] = in;
  m["outputs"] = outputs;
  write_text(path, m.dump(2) + "\n");
}

inline void require_compatible(const Dataset& ds, const ModelConfig& model, const std::string& what) {
  if (ds.num_classes != model.num_classes || ds.resolution != model.resolution)
    throw UsageError(what + " has K=" + std::to_string(ds.num_classes) + " R=" + std::to_string(ds.resolution) +
                     ", model expects K=" + std::to_string(model.num_classes) +
                     " R=" + std::to_string(model.resolution));
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Flags shared by several commands.
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string checkpoint;
};

inline RunConfig resolve(const CommonFlags& f) {
  RunConfig r = load_run_config(f.config);
  if (f.seed) r.seed = *f.seed;
  return r;
}

class Cli {
 public:
  Cli(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv) {
    CLI::App app{"Part-aware multi-view recognition: data synthesis, training, evaluation, introspection"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    add_gen_data(app);
    add_train(app);
    add_eval(app);
    add_gradcheck(app);
    add_ablate(app);
    add_inspect(app);
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out_ << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out_ << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::CallForVersion&) {
      out_ << kVersion << "\n";
      return 0;
    } catch (const CLI::ParseError& e) {
      err_ << "usage error: " << e.what() << "\n";
      return 2;
    }
    try {
      return action_();
    } catch (const std::invalid_argument& e) {  // UsageError, ConfigError, DimensionError
      err_ << "usage error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return 1;
    }
  }

 private:
  std::ostream& out_;
  std::ostream& err_;
  std::function<int()> action_;
  CommonFlags flags_;

  // Per-command options.
  std::string regime_, sampler_, val_;
  std::optional<std::size_t> per_class_, min_views_, max_views_, epochs_;
  std::size_t eval_max_views_ = 0;
  std::size_t coords_ = 50, repeats_ = 1, seeds_ = 3, index_ = 0;
  double threshold_ = 1e-3;
  std::string suite_;

  void add_common(CLI::App* c, bool out, bool data, bool checkpoint) {
    c->add_option("--config", flags_.config, "preset (default, tiny) or JSON config file");
    c->add_option("--seed", flags_.seed, "base seed");
    if (out) c->add_option("--out", flags_.out, "output location");
    if (data) c->add_option("--data", flags_.data, "dataset file");
    if (checkpoint) c->add_option("--checkpoint", flags_.checkpoint, "checkpoint file");
  }

  static void require(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing required flag ") + flag);
  }

  // gen-data ---------------------------------------------------------------
  void add_gen_data(CLI::App& app) {
    auto* c = app.add_subcommand("gen-data", "synthesize a multi-view dataset file");
    add_common(c, true, false, false);
    c->add_option("--regime", regime_, "aligned, rotated or arbitrary");
    c->add_option("--sampler", sampler_, "random or fps (arbitrary regime)");
    c->add_option("--per-class", per_class_, "objects per class (default: train_per_class)");
    c->add_option("--min-views", min_views_, "fewest views per object (arbitrary regime)");
    c->add_option("--max-views", max_views_, "most views per object (arbitrary regime)");
    c->callback([this] { action_ = [this] { return gen_data(); }; });
  }

  int gen_data() {
    require(flags_.out, "--out");
    RunConfig r = resolve(flags_);
    if (!regime_.empty()) r.data.regime = parse_regime(regime_);
    if (!sampler_.empty()) r.data.sampler = parse_sampler(sampler_);
    if (min_views_) r.data.min_views = *min_views_;
    if (max_views_) r.data.max_views = *max_views_;
    const std::size_t per_class = per_class_.value_or(r.data.train_per_class);
    r.data.train_per_class = per_class;
    r.validate();
    const DatasetSpec spec = r.data.split(per_class, r.seed);

    const std::filesystem::path out = flags_.out;
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    std::filesystem::path manifest = out;
    manifest += ".manifest.json";
    write_manifest(manifest, "gen-data", to_json(r), r.seed, {}, json{{"dataset", out.string()}});

    const Dataset ds = build_dataset(spec);
    const std::vector<char> bytes = encode_dataset(ds);
    io::write_file_atomic(out, bytes);

    std::map<std::size_t, std::size_t> histogram;
    for (const auto& s : ds.samples) ++histogram[s.view_count()];
    out_ << "dataset " << out.string() << ": K=" << ds.num_classes << " R=" << ds.resolution
         << " objects=" << ds.samples.size() << " (" << per_class << " per class) regime=" << to_string(r.data.regime)
         << " sampler=" << to_string(r.data.sampler) << "\n";
    out_ << "views:";
    for (const auto& [v, n] : histogram) out_ << " " << v << "x" << n;
    out_ << "\nsha256 " << sha256_hex(bytes) << "\n";
    return 0;
  }

  // train ------------------------------------------------------------------
  void add_train(CLI::App& app) {
    auto* c = app.add_subcommand("train", "train a model on a dataset file");
    add_common(c, true, true, true);
    c->add_option("--val", val_, "validation dataset file");
    c->add_option("--epochs", epochs_, "number of epochs (overrides config)");
    c->callback([this] { action_ = [this] { return train_cmd(); }; });
  }

  int train_cmd() {
    require(flags_.data, "--data");
    require(flags_.out, "--out");
    RunConfig r = resolve(flags_);
    if (epochs_) r.train.epochs = *epochs_;
    r.train.seed = r.seed;
    r.validate();

    const LoadedDataset train_ds = load_dataset(flags_.data);
    require_compatible(train_ds.data, r.model, "training set");
    std::optional<LoadedDataset> val_ds;
    if (!val_.empty()) {
      val_ds = load_dataset(val_);
      require_compatible(val_ds->data, r.model, "validation set");
    }

    ModelParams params;
    AdamState state;
    std::size_t first_epoch = 0;
    if (!flags_.checkpoint.empty()) {
      Checkpoint ck = load_checkpoint(flags_.checkpoint, r.model);
      params = std::move(ck.params);
      state = std::move(ck.state);
      first_epoch = ck.config.value("epochs_completed", std::size_t{0});
    } else {
      params = ModelParams::initialize(r.model, derive_seed(r.seed, {0x1417}));
      state = AdamState::zeros_like(params.tensors());
    }

    const std::filesystem::path dir = flags_.out;
    ensure_dir(dir);
    const auto ck_path = dir / "checkpoint.bin";
    const auto log_path = dir / "train_log.csv";
    std::vector<const LoadedDataset*> inputs{&train_ds};
    if (val_ds) inputs.push_back(&*val_ds);
    write_manifest(dir / "manifest.json", "train", to_json(r), r.seed, inputs,
                   json{{"checkpoint", ck_path.string()}, {"log", log_path.string()}});

    std::string log = "epoch,mean_loss,train_inst_acc,val_inst_acc,val_class_acc\n";
    auto checkpoint_config = [&](std::size_t done) {
      json j = to_json(r);
      j["epochs_completed"] = done;
      return j;
    };
    save_checkpoint(params, state, checkpoint_config(first_epoch), ck_path);
    write_text(log_path, log);
    train(params, state, train_ds.data, val_ds ? &val_ds->data : nullptr, r.train, first_epoch,
          [&](const EpochLog& l, const ModelParams& p, const AdamState& s) {
            log += std::to_string(l.epoch) + "," + fmt(l.mean_loss) + "," + fmt(l.train_inst_acc) + "," +
                   fmt(l.val_inst_acc) + "," + fmt(l.val_class_acc) + "\n";
            write_text(log_path, log);
            save_checkpoint(p, s, checkpoint_config(l.epoch), ck_path);
            out_ << "epoch " << l.epoch << " loss " << fmt(l.mean_loss) << " train_acc " << fmt(l.train_inst_acc);
            if (val_ds) out_ << " val_acc " << fmt(l.val_inst_acc) << " val_class_acc " << fmt(l.val_class_acc);
            out_ << std::endl;
          });
    out_ << "checkpoint " << ck_path.string() << "\n";
    return 0;
  }

  // eval -------------------------------------------------------------------
  void add_eval(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "evaluate a checkpoint on a dataset file");
    add_common(c, true, true, true);
    c->add_option("--max-views", eval_max_views_, "use only the first N views of each object (0 = all)");
    c->callback([this] { action_ = [this] { return eval_cmd(); }; });
  }

  int eval_cmd() {
    require(flags_.data, "--data");
    require(flags_.checkpoint, "--checkpoint");
    std::optional<ModelConfig> expected;
    if (!flags_.config.empty()) expected = resolve(flags_).model;
    const Checkpoint ck = load_checkpoint(flags_.checkpoint, expected);
    const LoadedDataset ds = load_dataset(flags_.data);
    require_compatible(ds.data, ck.params.config(), "evaluation set");

    std::optional<std::filesystem::path> dir;
    if (!flags_.out.empty()) {
      dir = flags_.out;
      ensure_dir(*dir);
      json cfg = ck.config;
      cfg["max_views"] = eval_max_views_;
      write_manifest(*dir / "manifest.json", "eval", cfg, flags_.seed.value_or(0), {&ds},
                     json{{"confusion", (*dir / "confusion.csv").string()}});
    }
    const Metrics m = evaluate(ck.params, ds.data, EvalOptions{eval_max_views_});
    out_ << "per_instance_acc " << fmt(m.per_instance_acc) << "\nper_class_acc " << fmt(m.per_class_acc) << "\n";
    if (dir) {
      std::string csv = "true\\pred";
      for (std::size_t k = 0; k < m.confusion.size(); ++k) csv += "," + std::to_string(k);
      csv += "\n";
      for (std::size_t t = 0; t < m.confusion.size(); ++t) {
        csv += std::to_string(t);
        for (std::size_t n : m.confusion[t]) csv += "," + std::to_string(n);
        csv += "\n";
      }
      write_text(*dir / "confusion.csv", csv);
    }
    return 0;
  }

  // gradcheck --------------------------------------------------------------
  void add_gradcheck(CLI::App& app) {
    auto* c = app.add_subcommand("gradcheck", "finite-difference check of the full model gradient");
    add_common(c, false, false, false);
    c->add_option("--coords", coords_, "parameter coordinates checked per seed");
    c->add_option("--repeats", repeats_, "number of consecutive seeds");
    c->add_option("--threshold", threshold_, "largest acceptable relative error");
    c->callback([this] { action_ = [this] { return gradcheck_cmd(); }; });
  }

  int gradcheck_cmd() {
    CommonFlags f = flags_;
    if (f.config.empty()) f.config = "tiny";
    const RunConfig r = resolve(f);
    if (repeats_ == 0 || coords_ == 0) throw UsageError("gradcheck: --coords and --repeats must be positive");
    double worst = 0.0;
    for (std::size_t i = 0; i < repeats_; ++i) {
      const std::uint64_t seed = r.seed + i;
      const ModelGradCheck g = model_gradcheck(r.model, seed, coords_);
      worst = std::max(worst, g.report.max_relative_error);
      char buf[160];
      std::snprintf(buf, sizeof buf, "seed %llu: %zu coordinates, max relative error %.3e (analytic %.6e, numeric %.6e)",
                    static_cast<unsigned long long>(seed), g.report.checked, g.report.max_relative_error,
                    g.report.worst_analytic, g.report.worst_numeric);
      out_ << buf << "\n";
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "max relative error %.3e (threshold %.1e)", worst, threshold_);
    out_ << buf << "\n";
    if (worst > threshold_) {
      err_ << "error: gradient check failed\n";
      return 1;
    }
    return 0;
  }

  // ablate -----------------------------------------------------------------
  void add_ablate(CLI::App& app) {
    auto* c = app.add_subcommand("ablate", "run an ablation suite and write its CSV");
    add_common(c, true, false, false);
    c->add_option("--suite", suite_, "component, attention_M, parts_L or sampler")->required();
    c->add_option("--seeds", seeds_, "number of seeds per setting");
    c->callback([this] { action_ = [this] { return ablate_cmd(); }; });
  }

  int ablate_cmd() {
    require(flags_.out, "--out");
    const AblationSuite suite = parse_suite(suite_);
    const RunConfig r = resolve(flags_);
    r.validate();
    if (seeds_ == 0) throw UsageError("ablate: --seeds must be positive");
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < seeds_; ++i) seeds.push_back(r.seed + i);
    const std::filesystem::path dir = flags_.out;
    ensure_dir(dir);
    const auto csv_path = dir / ("ablation_" + std::string(to_string(suite)) + ".csv");
    json cfg = to_json(r);
    cfg["suite"] = std::string(to_string(suite));
    cfg["seeds"] = seeds;
    write_manifest(dir / "manifest.json", "ablate", cfg, r.seed, {}, json{{"table", csv_path.string()}});
    out_ << kAblationCsvHeader << "\n";
    const auto rows = run_ablation(suite, r.model, r.train, r.data, seeds,
                                   [&](const AblationRow& row) { out_ << ablation_csv_row(row) << std::endl; });
    write_text(csv_path, ablation_csv(rows));
    return 0;
  }

  // inspect ----------------------------------------------------------------
  void add_inspect(CLI::App& app) {
    auto* c = app.add_subcommand("inspect", "export attention overlays and the part correlation matrix");
    add_common(c, true, true, true);
    c->add_option("--index", index_, "sample index in the dataset");
    c->callback([this] { action_ = [this] { return inspect_cmd(); }; });
  }

  int inspect_cmd() {
    require(flags_.data, "--data");
    require(flags_.checkpoint, "--checkpoint");
    require(flags_.out, "--out");
    std::optional<ModelConfig> expected;
    if (!flags_.config.empty()) expected = resolve(flags_).model;
    const Checkpoint ck = load_checkpoint(flags_.checkpoint, expected);
    const LoadedDataset ds = load_dataset(flags_.data);
    require_compatible(ds.data, ck.params.config(), "dataset");
    if (index_ >= ds.data.samples.size())
      throw UsageError("inspect: --index " + std::to_string(index_) + " outside dataset of " +
                       std::to_string(ds.data.samples.size()));

    const std::filesystem::path dir = flags_.out;
    ensure_dir(dir);
    json cfg = ck.config;
    cfg["index"] = index_;
    write_manifest(dir / "manifest.json", "inspect", cfg, flags_.seed.value_or(0), {&ds},
                   json{{"correlation", (dir / "correlation.csv").string()}, {"overlays", dir.string()}});
    const MultiViewSample& sample = ds.data.samples[index_];
    const ForwardResult fr = forward(ck.params, sample);
    const auto files = export_attention_overlays(fr.attention, ds.data.resolution, dir);
    const Tensor corr = part_correlation(fr.global_parts);
    write_text(dir / "correlation.csv", correlation_csv(corr));
    out_ << "sample " << index_ << " label " << sample.label << " predicted " << argmax(fr.probs.data()) << " views "
         << sample.view_count() << "\n";
    out_ << "overlays " << files.size() << "\n";
    if (corr.dim(0) >= 2) out_ << "mean_offdiag " << fmt(mean_offdiag(corr)) << "\n";
    return 0;
  }
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return Cli(out, err).run(argc, argv);
}

}  // namespace panet::cli
