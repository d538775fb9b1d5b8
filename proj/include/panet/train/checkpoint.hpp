#pragma once

// Checkpoint file: "PANETCK1", u32 version, u32 K R C M L D h, u32 mlp_ratio,
// u32 encoder widths x3, u32 use_cva, u64 optimizer step, u32 + bytes of the
// resolved run configuration (JSON text), u32 blob count, then blobs of
// (u32 name length, name, u32 rank, u32 extents..., f64 data). Parameters come
// first in model order, followed by "adam.m/<name>" and "adam.v/<name>".
// All integers and reals little-endian.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "panet/errors.hpp"
#include "panet/io/binary.hpp"
#include "panet/model/config.hpp"
#include "panet/model/params.hpp"
#include "panet/train/adamw.hpp"

namespace panet {

inline constexpr std::string_view kCheckpointMagic = "PANETCK1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  AdamState state;
  nlohmann::json config;
};

namespace detail {

inline void write_blob(io::ByteWriter& w, const std::string& name, const Extents& shape, std::span<const double> data) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) w.u32(static_cast<std::uint32_t>(d));
  for (double v : data) w.f64(v);
}

inline std::vector<double> read_blob(io::ByteReader& r, const std::string& expected_name, const Extents& expected_shape) {
  const std::uint32_t name_len = r.u32();
  if (name_len > 4096) throw FormatError(r.source() + ": implausible blob name length");
  const std::string name = r.bytes(name_len);
  if (name != expected_name)
    throw FormatError(r.source() + ": expected blob '" + expected_name + "', found '" + name + "'");
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw FormatError(r.source() + ": blob '" + name + "' has implausible rank");
  Extents shape(rank);
  for (auto& d : shape) d = r.u32();
  if (shape != expected_shape)
    throw FormatError(r.source() + ": blob '" + name + "' has shape " + shape_str(shape) + ", expected " +
                      shape_str(expected_shape));
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = r.f64();
  return data;
}

}  // namespace detail

inline std::vector<char> encode_checkpoint(const ModelParams& params, const AdamState& state,
                                           const nlohmann::json& config) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw UsageError("save_checkpoint: optimizer state does not match parameters");
  const ModelConfig& c = params.config();
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  for (std::uint32_t v : {c.num_classes, c.resolution, c.channels, c.attention_maps, c.part_tokens, c.depth, c.heads})
    w.u32(v);
  w.u32(c.mlp_ratio);
  for (std::uint32_t v : c.encoder_widths) w.u32(v);
  w.u32(c.use_cva ? 1u : 0u);
  w.u64(state.step);
  const std::string text = config.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  w.u32(static_cast<std::uint32_t>(3 * params.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    detail::write_blob(w, params.name(i), params[i].shape(), params[i].data());
  for (std::size_t i = 0; i < params.size(); ++i)
    detail::write_blob(w, "adam.m/" + params.name(i), params[i].shape(), state.m[i]);
  for (std::size_t i = 0; i < params.size(); ++i)
    detail::write_blob(w, "adam.v/" + params.name(i), params[i].shape(), state.v[i]);
  return w.buffer();
}

/// Parses a checkpoint image. If `expected` is given, the stored K, R, C, M,
/// L, D and h must equal it. Nothing is returned unless the whole file
/// decodes.
inline Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& source,
                                    const std::optional<ModelConfig>& expected = {}) {
  io::ByteReader r(bytes, source);
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) throw FormatError(source + ": not a PANETCK1 checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version));
  ModelConfig c;
  c.num_classes = r.u32();
  c.resolution = r.u32();
  c.channels = r.u32();
  c.attention_maps = r.u32();
  c.part_tokens = r.u32();
  c.depth = r.u32();
  c.heads = r.u32();
  c.mlp_ratio = r.u32();
  for (auto& w : c.encoder_widths) w = r.u32();
  c.use_cva = r.u32() != 0;
  if (expected) {
    const std::pair<const char*, std::pair<std::uint32_t, std::uint32_t>> checks[] = {
        {"K", {c.num_classes, expected->num_classes}}, {"R", {c.resolution, expected->resolution}},
        {"C", {c.channels, expected->channels}},       {"M", {c.attention_maps, expected->attention_maps}},
        {"L", {c.part_tokens, expected->part_tokens}}, {"D", {c.depth, expected->depth}},
        {"h", {c.heads, expected->heads}}};
    for (const auto& [key, vals] : checks)
      if (vals.first != vals.second)
        throw FormatError(source + ": checkpoint has " + key + "=" + std::to_string(vals.first) + ", expected " +
                          std::to_string(vals.second));
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(source + ": invalid hyperparameters in header: " + e.what());
  }

  Checkpoint ck;
  ck.state.step = r.u64();
  const std::uint32_t text_len = r.u32();
  const std::string text = r.bytes(text_len);
  try {
    ck.config = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": corrupt embedded configuration: " + e.what());
  }
  ModelParams params = ModelParams::zeros(c);
  const std::uint32_t blobs = r.u32();
  if (blobs != 3 * params.size())
    throw FormatError(source + ": expected " + std::to_string(3 * params.size()) + " blobs, found " +
                      std::to_string(blobs));
  for (std::size_t i = 0; i < params.size(); ++i)
    params.set(i, Tensor(params[i].shape(), detail::read_blob(r, params.name(i), params[i].shape())));
  for (std::size_t i = 0; i < params.size(); ++i)
    ck.state.m.push_back(detail::read_blob(r, "adam.m/" + params.name(i), params[i].shape()));
  for (std::size_t i = 0; i < params.size(); ++i)
    ck.state.v.push_back(detail::read_blob(r, "adam.v/" + params.name(i), params[i].shape()));
  if (!r.at_end()) throw FormatError(source + ": trailing bytes after last blob");
  for (const Tensor& t : params.tensors())
    if (!t.all_finite()) throw FormatError(source + ": non-finite parameter values");
  ck.params = std::move(params);
  return ck;
}

inline void save_checkpoint(const ModelParams& params, const AdamState& state, const nlohmann::json& config,
                            const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(params, state, config));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected = {}) {
  return decode_checkpoint(io::read_file(path), path.string(), expected);
}

}  // namespace panet
