// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

// Checkpoint container:
//   "TFMB" | u32 version | u64 meta_len | meta (JSON, UTF-8) | u32 n_tensors |
//   n_tensors x { u32 name_len | name | u32 rank | rank x u64 extent |
//                 numel x f64 }
// All integers and floats little-endian.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfmamba/config.hpp"
#include "tfmamba/data.hpp"
#include "tfmamba/model.hpp"

namespace tfmamba {

inline constexpr std::array<char, 4> kCheckpointMagic{'T', 'F', 'M', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Which cross-validation split a checkpoint was trained on.
struct SplitInfo {
  std::size_t fold = 0;
  std::size_t n_folds = 0;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  ModelConfig config;
  ModelWeights<Tensor> weights;
  std::vector<std::string> classes;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::optional<SplitInfo> split;
};

inline std::string encode_checkpoint(const Checkpoint& ck) {
  json meta = {{"config", to_json_value(ck.config)},
               {"classes", ck.classes},
               {"step", ck.step},
               {"seed", ck.seed}};
  if (ck.split) {
    meta["split"] = {{"fold", ck.split->fold}, {"n_folds", ck.split->n_folds}, {"seed", ck.split->seed}};
  }
  const std::string meta_str = meta.dump();
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  bytes::put_u32(out, kCheckpointVersion);
  bytes::put_u64(out, meta_str.size());
  out += meta_str;
  std::uint32_t count = 0;
  visit_model(ck.weights, ck.config, [&](const std::string&, const Tensor&) { ++count; });
  bytes::put_u32(out, count);
  visit_model(ck.weights, ck.config, [&](const std::string& name, const Tensor& t) {
    bytes::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    bytes::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) bytes::put_u64(out, e);
    for (double v : t.data()) bytes::put_f64(out, v);
  });
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view buf) {
  bytes::Reader r(buf);
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic.begin())) {
    throw FormatError("bad checkpoint magic", 0);
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const std::uint64_t meta_len = r.u64("config length");
  const std::size_t meta_at = r.offset();
  const auto meta_str = r.take(meta_len, "config block");
  Checkpoint ck;
  try {
    const json meta = json::parse(meta_str);
    ck.config = model_config_from_json(meta.at("config"));
    ck.classes = meta.at("classes").get<std::vector<std::string>>();
    ck.step = meta.at("step").get<std::uint64_t>();
    ck.seed = meta.at("seed").get<std::uint64_t>();
    if (meta.contains("split")) {
      const json& s = meta["split"];
      ck.split = SplitInfo{s.at("fold").get<std::size_t>(), s.at("n_folds").get<std::size_t>(),
                           s.at("seed").get<std::uint64_t>()};
    }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad checkpoint config block: ") + e.what(), meta_at);
  }
  ck.config.validate();
  ck.weights.blocks.resize(block_count(ck.config));
  const std::uint32_t count = r.u32("tensor count");
  std::uint32_t seen = 0;
  // Records must appear in canonical order with config-consistent shapes.
  ModelWeights<Tensor> shapes = init_model(ck.config, 0);
  std::vector<std::pair<std::string, const Tensor*>> expected;
  visit_model(shapes, ck.config, [&](const std::string& n, const Tensor& t) { expected.emplace_back(n, &t); });
  if (count != expected.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, config expects " +
                          std::to_string(expected.size()),
                      r.offset() - 4);
  }
  visit_model(ck.weights, ck.config, [&](const std::string& name, Tensor& t) {
    const std::size_t at = r.offset();
    const std::uint32_t name_len = r.u32("tensor name length");
    const std::string got(r.take(name_len, "tensor name"));
    if (got != name) throw FormatError("expected tensor '" + name + "', found '" + got + "'", at);
    const std::uint32_t rank = r.u32("tensor rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u64("tensor extent"));
    if (shape != expected[seen].second->shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_str(shape) + ", config expects " +
                            shape_str(expected[seen].second->shape()),
                        at);
    }
    std::vector<double> data(shape_numel(shape));
    r.need(data.size() * 8, "tensor payload");
    for (double& v : data) v = r.f64("tensor payload");
    t = Tensor(shape, std::move(data));
    ++seen;
  });
  if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint", r.offset());
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  try {
    return decode_checkpoint(buf);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.message(), e.offset());
  }
}

}  // namespace tfmamba
