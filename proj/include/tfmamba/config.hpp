// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "tfmamba/errors.hpp"
#include "tfmamba/model.hpp"

namespace tfmamba {

using nlohmann::json;

struct TrainConfig {
  double lr = 5e-4;
  std::size_t batch = 32;
  std::size_t epochs = 50;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  double lambda = 0.1;
  double tau = 0.1;
  GateMode eval_gate_mode = GateMode::soft;

  void validate() const {
    if (!(lr >= 0.0)) throw ConfigError("train.lr: must be >= 0");
    if (batch < 1) throw ConfigError("train.batch: must be >= 1");
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay: must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("train.beta1/beta2: must be in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("train.eps: must be positive");
    if (!(tau > 0.0)) throw ConfigError("train.tau: must be positive");
    if (!(lambda >= 0.0)) throw ConfigError("train.lambda: must be >= 0");
  }
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string manifest;
  std::string label_map;  // empty: labels.json next to the manifest
  std::size_t n_folds = 5;
  std::string out = "runs/default";

  std::filesystem::path label_map_path() const {
    if (!label_map.empty()) return label_map;
    return std::filesystem::path(manifest).parent_path() / "labels.json";
  }
};

inline std::string_view gate_mode_name(GateMode m) { return m == GateMode::soft ? "soft" : "hard"; }

inline GateMode parse_gate_mode(std::string_view s) {
  if (s == "soft") return GateMode::soft;
  if (s == "hard") return GateMode::hard;
  throw ConfigError("gate_mode: expected \"soft\" or \"hard\", got \"" + std::string(s) + "\"");
}

namespace detail {

/// Rejects keys outside `allowed`, naming the offending dotted path.
inline void check_keys(const json& j, const std::string& where,
                       std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string_view> ok(allowed);
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw ConfigError((where.empty() ? "" : where + ".") + k + ": unknown field");
  }
}

template <class T>
void read_field(const json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (!j.at(key).is_number_unsigned() &&
          !(j.at(key).is_number_integer() && j.at(key).get<long long>() >= 0)) {
        throw ConfigError("");
      }
    }
    out = j.at(key).get<T>();
  } catch (const std::exception&) {
    throw ConfigError((where.empty() ? "" : where + ".") + key + ": invalid value " +
                      j.at(key).dump());
  }
}

}  // namespace detail

inline json to_json_value(const TfBlockConfig& b) {
  return {{"expand_dim", b.expand_dim}, {"state_dim", b.state_dim},  {"groups", b.groups},
          {"conv_width", b.conv_width}, {"chunk", b.chunk},          {"gate_mode", gate_mode_name(b.gate_mode)},
          {"gate_slope", b.gate_slope}, {"norm_eps", b.norm_eps}};
}

inline json to_json_value(const ModelConfig& m) {
  return {{"input_dim", m.input_dim},   {"heads", m.heads},   {"model_dim", m.model_dim},
          {"n_blocks", m.n_blocks},     {"classes", m.classes}, {"mlp_hidden", m.mlp_hidden},
          {"variant", variant_name(m.variant)}, {"block", to_json_value(m.block)}};
}

inline json to_json_value(const TrainConfig& t) {
  return {{"lr", t.lr},         {"batch", t.batch},   {"epochs", t.epochs},
          {"weight_decay", t.weight_decay}, {"beta1", t.beta1}, {"beta2", t.beta2},
          {"eps", t.eps},       {"seed", t.seed},     {"lambda", t.lambda},
          {"tau", t.tau},       {"eval_gate_mode", gate_mode_name(t.eval_gate_mode)}};
}

inline json to_json_value(const RunConfig& r) {
  return {{"model", to_json_value(r.model)},
          {"train", to_json_value(r.train)},
          {"data", {{"manifest", r.manifest}, {"label_map", r.label_map}}},
          {"n_folds", r.n_folds},
          {"out", r.out}};
}

inline TfBlockConfig block_config_from_json(const json& j, TfBlockConfig b = {}) {
  const std::string w = "model.block";
  detail::check_keys(j, w, {"expand_dim", "state_dim", "groups", "conv_width", "chunk",
                            "gate_mode", "gate_slope", "norm_eps"});
  detail::read_field(j, w, "expand_dim", b.expand_dim);
  detail::read_field(j, w, "state_dim", b.state_dim);
  detail::read_field(j, w, "groups", b.groups);
  detail::read_field(j, w, "conv_width", b.conv_width);
  detail::read_field(j, w, "chunk", b.chunk);
  detail::read_field(j, w, "gate_slope", b.gate_slope);
  detail::read_field(j, w, "norm_eps", b.norm_eps);
  if (j.contains("gate_mode")) {
    std::string s;
    detail::read_field(j, w, "gate_mode", s);
    b.gate_mode = parse_gate_mode(s);
  }
  return b;
}

inline ModelConfig model_config_from_json(const json& j, ModelConfig m = {}) {
  const std::string w = "model";
  detail::check_keys(j, w, {"input_dim", "heads", "model_dim", "n_blocks", "classes", "mlp_hidden",
                            "variant", "block"});
  detail::read_field(j, w, "input_dim", m.input_dim);
  detail::read_field(j, w, "heads", m.heads);
  detail::read_field(j, w, "model_dim", m.model_dim);
  detail::read_field(j, w, "n_blocks", m.n_blocks);
  detail::read_field(j, w, "classes", m.classes);
  detail::read_field(j, w, "mlp_hidden", m.mlp_hidden);
  if (j.contains("variant")) {
    std::string s;
    detail::read_field(j, w, "variant", s);
    m.variant = parse_variant(s);
  }
  if (j.contains("block")) m.block = block_config_from_json(j["block"], m.block);
  return m;
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig t = {}) {
  const std::string w = "train";
  detail::check_keys(j, w, {"lr", "batch", "epochs", "weight_decay", "beta1", "beta2", "eps", "seed",
                            "lambda", "tau", "eval_gate_mode"});
  detail::read_field(j, w, "lr", t.lr);
  detail::read_field(j, w, "batch", t.batch);
  detail::read_field(j, w, "epochs", t.epochs);
  detail::read_field(j, w, "weight_decay", t.weight_decay);
  detail::read_field(j, w, "beta1", t.beta1);
  detail::read_field(j, w, "beta2", t.beta2);
  detail::read_field(j, w, "eps", t.eps);
  detail::read_field(j, w, "seed", t.seed);
  detail::read_field(j, w, "lambda", t.lambda);
  detail::read_field(j, w, "tau", t.tau);
  if (j.contains("eval_gate_mode")) {
    std::string s;
    detail::read_field(j, w, "eval_gate_mode", s);
    t.eval_gate_mode = parse_gate_mode(s);
  }
  return t;
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig r;
  detail::check_keys(j, "", {"model", "train", "data", "n_folds", "out", "variant"});
  if (j.contains("model")) r.model = model_config_from_json(j["model"]);
  if (j.contains("train")) r.train = train_config_from_json(j["train"]);
  if (j.contains("data")) {
    const json& d = j["data"];
    detail::check_keys(d, "data", {"manifest", "label_map"});
    detail::read_field(d, "data", "manifest", r.manifest);
    detail::read_field(d, "data", "label_map", r.label_map);
  }
  detail::read_field(j, "", "n_folds", r.n_folds);
  detail::read_field(j, "", "out", r.out);
  // Top-level shorthand for the ablation preset.
  if (j.contains("variant")) {
    std::string s;
    detail::read_field(j, "", "variant", s);
    r.model.variant = parse_variant(s);
  }
  return r;
}

/// Applies `key=value` with a dotted key path. The value is parsed as JSON
/// when possible and taken as a string otherwise.
inline void apply_override(json& root, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("--set expects KEY=VALUE, got '" + std::string(assignment) + "'");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set: empty path segment in '" + key + "'");
    if (!node->is_object()) throw ConfigError("--set: '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

}  // namespace tfmamba
