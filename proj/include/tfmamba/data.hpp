// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfmamba/errors.hpp"
#include "tfmamba/fft.hpp"
#include "tfmamba/rng.hpp"
#include "tfmamba/tensor.hpp"

namespace tfmamba {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Little-endian byte helpers shared by the binary containers.

namespace bytes {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }
inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

/// Sequential reader that reports the failing offset.
class Reader {
 public:
  explicit Reader(std::string_view buf) : buf_(buf) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated ") + what + ": expected " + std::to_string(n) +
                            " bytes, found " + std::to_string(remaining()),
                        pos_);
    }
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

  std::uint64_t u64(const char* what) {
    auto s = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

 private:
  std::string_view buf_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::string_view data) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

}  // namespace bytes

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Feature files: "TFF1" | u32 version | u32 id_len | id | u32 L | u32 D |
// u32 label | L*D float32 | u32 crc32(payload), all little-endian.

inline constexpr std::array<char, 4> kFeatureMagic{'T', 'F', 'F', '1'};
inline constexpr std::uint32_t kFeatureVersion = 1;

struct FeatureFile {
  std::string id;
  Tensor features;  // L x D
  std::uint32_t label = 0;

  std::size_t length() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

inline std::string encode_feature_file(const FeatureFile& f) {
  require_matrix(f.features, "feature payload");
  std::string out(kFeatureMagic.begin(), kFeatureMagic.end());
  bytes::put_u32(out, kFeatureVersion);
  bytes::put_u32(out, static_cast<std::uint32_t>(f.id.size()));
  out += f.id;
  bytes::put_u32(out, static_cast<std::uint32_t>(f.features.rows()));
  bytes::put_u32(out, static_cast<std::uint32_t>(f.features.cols()));
  bytes::put_u32(out, f.label);
  std::string payload;
  payload.reserve(f.features.size() * 4);
  for (double v : f.features.data()) bytes::put_f32(payload, static_cast<float>(v));
  out += payload;
  bytes::put_u32(out, bytes::crc32_of(payload));
  return out;
}

inline FeatureFile decode_feature_file(std::string_view buf) {
  bytes::Reader r(buf);
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kFeatureMagic.begin())) {
    throw FormatError("bad feature-file magic", 0);
  }
  const std::uint32_t version = r.u32("version");
  if (version != kFeatureVersion) {
    throw FormatError("unsupported feature-file version " + std::to_string(version), 4);
  }
  FeatureFile f;
  const std::uint32_t id_len = r.u32("id length");
  f.id = std::string(r.take(id_len, "id"));
  const std::uint32_t len = r.u32("L");
  const std::uint32_t dim = r.u32("D");
  f.label = r.u32("label");
  const std::size_t payload_bytes = std::size_t{len} * dim * 4;
  if (r.remaining() < payload_bytes + 4) {
    throw FormatError("truncated payload: expected " + std::to_string(payload_bytes + 4) +
                          " bytes (payload + crc), found " + std::to_string(r.remaining()),
                      r.offset());
  }
  const std::size_t payload_start = r.offset();
  const std::string_view payload = buf.substr(payload_start, payload_bytes);
  f.features = Tensor({len, dim});
  for (std::size_t i = 0; i < f.features.size(); ++i) {
    const std::size_t at = r.offset();
    const float v = r.f32("payload");
    if (!std::isfinite(v)) throw FormatError("non-finite feature value", at);
    f.features[i] = v;
  }
  const std::size_t crc_at = r.offset();
  const std::uint32_t crc = r.u32("crc");
  if (crc != bytes::crc32_of(payload)) throw FormatError("payload CRC-32 mismatch", crc_at);
  if (r.remaining() != 0) throw FormatError("trailing bytes after CRC", r.offset());
  return f;
}

inline void write_feature_file(const fs::path& path, const FeatureFile& f) {
  write_file(path, encode_feature_file(f));
}

inline FeatureFile load_feature_file(const fs::path& path) {
  const std::string buf = read_file(path);
  try {
    return decode_feature_file(buf);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.message(), e.offset());
  }
}

/// Whitespace-separated text matrix (one token per row), for fixtures.
inline FeatureFile import_text_features(std::istream& in, std::string id, std::uint32_t label) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("text features: no rows", 0);
  const std::size_t dim = rows[0].size();
  Tensor t({rows.size(), dim});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) throw FormatError("text features: ragged row " + std::to_string(i), i);
    for (std::size_t j = 0; j < dim; ++j) t(i, j) = rows[i][j];
  }
  return {std::move(id), std::move(t), label};
}

// ---------------------------------------------------------------------------
// Manifest: CSV "path,label,fold_hint" plus a label map {"classes": [...]}.

struct ManifestEntry {
  std::string path;  // as written; resolved against the manifest directory
  std::uint32_t label = 0;
  std::optional<int> fold_hint;
};

struct DatasetManifest {
  std::vector<std::string> classes;
  std::vector<ManifestEntry> entries;
  fs::path root;  // directory relative paths resolve against
  std::string sampling_note = "16 kHz source audio (informational)";

  std::size_t class_count() const { return classes.size(); }

  fs::path resolve(const ManifestEntry& e) const {
    const fs::path p(e.path);
    return p.is_absolute() ? p : root / p;
  }

  std::vector<std::uint32_t> labels() const {
    std::vector<std::uint32_t> out;
    for (const auto& e : entries) out.push_back(e.label);
    return out;
  }

  void validate() const {
    if (classes.empty()) throw ConfigError("manifest: empty label map");
    std::set<std::string> seen;
    for (const auto& e : entries) {
      if (e.label >= classes.size()) {
        throw ConfigError("manifest: label " + std::to_string(e.label) + " out of range for " +
                          e.path);
      }
      if (!seen.insert(e.path).second) throw ConfigError("manifest: duplicate path " + e.path);
    }
  }
};

inline std::vector<std::string> load_label_map(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
  if (!j.contains("classes") || !j["classes"].is_array()) {
    throw FormatError(path.string() + ": missing \"classes\" array", 0);
  }
  return j["classes"].get<std::vector<std::string>>();
}

inline std::string label_map_json(const std::vector<std::string>& classes) {
  return nlohmann::json{{"classes", classes}}.dump(2) + "\n";
}

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace detail

/// Reads a manifest; labels may be class names or integer ids.
inline DatasetManifest load_manifest(const fs::path& csv_path, const fs::path& label_map_path) {
  DatasetManifest m;
  m.classes = load_label_map(label_map_path);
  m.root = csv_path.parent_path();
  std::map<std::string, std::uint32_t> by_name;
  for (std::size_t i = 0; i < m.classes.size(); ++i) by_name[m.classes[i]] = static_cast<std::uint32_t>(i);
  std::istringstream in(read_file(csv_path));
  std::string line;
  std::size_t lineno = 0, offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    if (lineno == 1) {
      if (fields.size() < 2 || fields[0] != "path" || fields[1] != "label") {
        throw FormatError(csv_path.string() + ": header must be path,label,fold_hint", 0);
      }
      continue;
    }
    if (fields.size() < 2 || fields.size() > 3) {
      throw FormatError(csv_path.string() + ": line " + std::to_string(lineno) + " needs 2-3 fields",
                        line_start);
    }
    ManifestEntry e;
    e.path = fields[0];
    if (auto it = by_name.find(fields[1]); it != by_name.end()) {
      e.label = it->second;
    } else {
      try {
        std::size_t used = 0;
        const long v = std::stol(fields[1], &used);
        if (used != fields[1].size() || v < 0) throw std::invalid_argument("label");
        e.label = static_cast<std::uint32_t>(v);
      } catch (const std::exception&) {
        throw FormatError(csv_path.string() + ": unknown label '" + fields[1] + "' on line " +
                              std::to_string(lineno),
                          line_start);
      }
    }
    if (fields.size() == 3 && !fields[2].empty()) {
      try {
        e.fold_hint = std::stoi(fields[2]);
      } catch (const std::exception&) {
        throw FormatError(csv_path.string() + ": bad fold_hint on line " + std::to_string(lineno),
                          line_start);
      }
    }
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

inline std::string manifest_csv(const DatasetManifest& m) {
  std::string out = "path,label,fold_hint\n";
  for (const auto& e : m.entries) {
    out += e.path + "," + m.classes.at(e.label) + ",";
    if (e.fold_hint) out += std::to_string(*e.fold_hint);
    out += "\n";
  }
  return out;
}

/// Loads every manifest entry in manifest order.
inline std::vector<FeatureFile> load_dataset(const DatasetManifest& m) {
  std::vector<FeatureFile> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    FeatureFile f = load_feature_file(m.resolve(e));
    if (f.label != e.label) {
      throw MismatchError(e.path + ": file label " + std::to_string(f.label) +
                          " differs from manifest label " + std::to_string(e.label));
    }
    if (f.label >= m.class_count()) {
      throw MismatchError(e.path + ": label outside the label map");
    }
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation folds.

struct FoldSplit {
  std::size_t fold = 0;
  std::vector<std::size_t> train;  // indices into the dataset
  std::vector<std::size_t> test;
};

/// Seeded stratified split: each class is shuffled and dealt round-robin,
/// continuing the rotation across classes so fold sizes stay balanced. When
/// every entry carries a fold hint and the hints name exactly n_folds groups,
/// the hints define the test folds instead.
inline std::vector<FoldSplit> make_folds(std::span<const std::uint32_t> labels,
                                         std::span<const std::optional<int>> hints,
                                         std::size_t n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw std::invalid_argument("make_folds: need at least 2 folds");
  const std::size_t n = labels.size();
  if (n < n_folds) {
    throw std::invalid_argument("make_folds: " + std::to_string(n) + " samples for " +
                                std::to_string(n_folds) + " folds");
  }
  std::vector<std::size_t> fold_of(n, 0);
  const bool hinted = !hints.empty() && hints.size() == n &&
                      std::all_of(hints.begin(), hints.end(), [](const auto& h) { return h.has_value(); });
  std::set<int> distinct;
  if (hinted) {
    for (const auto& h : hints) distinct.insert(*h);
  }
  if (hinted && distinct.size() == n_folds) {
    const std::vector<int> order(distinct.begin(), distinct.end());
    for (std::size_t i = 0; i < n; ++i) {
      fold_of[i] = static_cast<std::size_t>(std::lower_bound(order.begin(), order.end(), *hints[i]) - order.begin());
    }
  } else {
    Rng rng(seed);
    const std::uint32_t k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    std::size_t next = 0;
    for (std::uint32_t c = 0; c < k; ++c) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == c) idx.push_back(i);
      rng.shuffle(idx);
      for (std::size_t i : idx) {
        fold_of[i] = next;
        next = (next + 1) % n_folds;
      }
    }
  }
  std::vector<FoldSplit> folds(n_folds);
  for (std::size_t f = 0; f < n_folds; ++f) folds[f].fold = f;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < n_folds; ++f) {
      (fold_of[i] == f ? folds[f].test : folds[f].train).push_back(i);
    }
  }
  return folds;
}

inline std::vector<FoldSplit> make_folds(const DatasetManifest& m, std::size_t n_folds,
                                         std::uint64_t seed) {
  std::vector<std::optional<int>> hints;
  for (const auto& e : m.entries) hints.push_back(e.fold_hint);
  const auto labels = m.labels();
  return make_folds(labels, hints, n_folds, seed);
}

// ---------------------------------------------------------------------------
// Synthetic emotion-cue data.

/// Temporal intensity profiles, evaluated at u = t / (L - 1) in [0, 1].
enum class Envelope : int { none = 0, flat = 1, rising = 2, falling = 3, bump = 4, dip = 5 };

inline double envelope_value(int id, double u) {
  switch (static_cast<Envelope>(id)) {
    case Envelope::none: return 0.0;
    case Envelope::flat: return 1.0;
    case Envelope::rising: return 2.0 * u - 1.0;
    case Envelope::falling: return 1.0 - 2.0 * u;
    case Envelope::bump: return std::exp(-std::pow((u - 0.5) / 0.15, 2.0));
    case Envelope::dip: return 1.0 - std::exp(-std::pow((u - 0.5) / 0.15, 2.0));
  }
  throw ConfigError("unknown envelope id " + std::to_string(id));
}

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t per_class = 40;
  std::size_t length = 64;  // L
  std::size_t dim = 32;     // D
  std::vector<std::size_t> carrier_bins{3, 7, 11, 15};
  std::vector<int> envelopes{1, 2, 3, 4};
  double noise = 0.1;
  double carrier_amplitude = 1.0;
  double envelope_amplitude = 1.0;
  double carrier_channel_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (classes < 2) throw ConfigError("synth: classes must be >= 2");
    if (per_class == 0 || length < 2 || dim < 1) throw ConfigError("synth: empty extents");
    if (carrier_bins.size() != classes || envelopes.size() != classes) {
      throw ConfigError("synth: carrier_bins and envelopes need one entry per class");
    }
    for (std::size_t b : carrier_bins) {
      if (b >= rfft_bins(length)) {
        throw ConfigError("synth: carrier bin " + std::to_string(b) + " >= floor(L/2)+1");
      }
    }
    for (int e : envelopes) {
      if (e < 0 || e > 5) throw ConfigError("synth: envelope id must be in 0..5");
    }
    if (!(noise >= 0.0)) throw ConfigError("synth: noise must be >= 0");
    if (!(carrier_channel_fraction > 0.0 && carrier_channel_fraction <= 1.0)) {
      throw ConfigError("synth: carrier_channel_fraction must be in (0, 1]");
    }
  }
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"classes", s.classes},
       {"per_class", s.per_class},
       {"length", s.length},
       {"dim", s.dim},
       {"carrier_bins", s.carrier_bins},
       {"envelopes", s.envelopes},
       {"noise", s.noise},
       {"carrier_amplitude", s.carrier_amplitude},
       {"envelope_amplitude", s.envelope_amplitude},
       {"carrier_channel_fraction", s.carrier_channel_fraction},
       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  s.classes = j.value("classes", s.classes);
  s.per_class = j.value("per_class", s.per_class);
  s.length = j.value("length", s.length);
  s.dim = j.value("dim", s.dim);
  s.carrier_bins = j.value("carrier_bins", s.carrier_bins);
  s.envelopes = j.value("envelopes", s.envelopes);
  s.noise = j.value("noise", s.noise);
  s.carrier_amplitude = j.value("carrier_amplitude", s.carrier_amplitude);
  s.envelope_amplitude = j.value("envelope_amplitude", s.envelope_amplitude);
  s.carrier_channel_fraction = j.value("carrier_channel_fraction", s.carrier_channel_fraction);
  s.seed = j.value("seed", s.seed);
}

/// Utterance of class c:
///   x[t,j] = A_env * env_c(t) * base[j]
///          + A_car * cos(2 pi f_c t / L + phase) * [j in S]
///          + noise * N(0, 1)
/// with `base` fixed per dataset, and the phase and channel subset S drawn
/// per utterance. Samples are ordered class-major.
inline std::vector<FeatureFile> synth_generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<double> base(spec.dim);
  for (double& b : base) b = rng.normal();
  std::vector<FeatureFile> out;
  out.reserve(spec.classes * spec.per_class);
  const double len = static_cast<double>(spec.length);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t u = 0; u < spec.per_class; ++u) {
      FeatureFile f;
      char id[32];
      std::snprintf(id, sizeof(id), "c%zu_u%04zu", c, u);
      f.id = id;
      f.label = static_cast<std::uint32_t>(c);
      f.features = Tensor({spec.length, spec.dim});
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      std::vector<bool> carrier_on(spec.dim, false);
      bool any = false;
      for (std::size_t j = 0; j < spec.dim; ++j) {
        carrier_on[j] = rng.uniform() < spec.carrier_channel_fraction;
        any = any || carrier_on[j];
      }
      if (!any) carrier_on[rng.below(spec.dim)] = true;
      const double freq = 2.0 * std::numbers::pi * static_cast<double>(spec.carrier_bins[c]) / len;
      for (std::size_t t = 0; t < spec.length; ++t) {
        const double pos = spec.length > 1 ? static_cast<double>(t) / (len - 1.0) : 0.0;
        const double env = spec.envelope_amplitude * envelope_value(spec.envelopes[c], pos);
        const double car = spec.carrier_amplitude * std::cos(freq * static_cast<double>(t) + phase);
        for (std::size_t j = 0; j < spec.dim; ++j) {
          double v = env * base[j] + (carrier_on[j] ? car : 0.0);
          if (spec.noise > 0.0) v += spec.noise * rng.normal();
          // Stored as float32 on disk; keep memory copies identical.
          f.features(t, j) = static_cast<float>(v);
        }
      }
      out.push_back(std::move(f));
    }
  }
  return out;
}

/// Writes feature files, manifest.csv, and labels.json under `dir`.
inline DatasetManifest write_dataset(const fs::path& dir, const std::vector<FeatureFile>& files,
                                     const std::vector<std::string>& classes) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
  DatasetManifest m;
  m.classes = classes;
  m.root = dir;
  for (const auto& f : files) {
    const std::string name = f.id + ".tff";
    write_feature_file(dir / name, f);
    m.entries.push_back({name, f.label, std::nullopt});
  }
  write_file(dir / "manifest.csv", manifest_csv(m));
  write_file(dir / "labels.json", label_map_json(classes));
  return m;
}

inline std::vector<std::string> default_class_names(std::size_t k) {
  static const std::vector<std::string> four{"neutral", "happy", "angry", "sad"};
  if (k == 4) return four;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back("class" + std::to_string(i));
  return out;
}

}  // namespace tfmamba
