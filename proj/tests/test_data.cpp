// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <set>

#include "tfmamba/data.hpp"
#include "tfmamba/metrics.hpp"

using namespace tfmamba;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tfmamba_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Reflected CRC-32 (polynomial 0xEDB88320), bit by bit.
std::uint32_t crc32_bitwise(std::string_view s) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (unsigned char ch : s) {
    crc ^= ch;
    for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

void le32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

std::string hand_fixture() {
  std::string payload;
  for (float f : {1.f, 2.f, 3.f, 4.f, 5.f, 6.f}) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    le32(payload, bits);
  }
  std::string buf = "TFF1";
  le32(buf, 1);
  le32(buf, 3);
  buf += "utt";
  le32(buf, 2);
  le32(buf, 3);
  le32(buf, 1);
  buf += payload;
  le32(buf, crc32_bitwise(payload));
  return buf;
}

MetricsReport metrics_of(std::vector<std::vector<std::uint64_t>> rows) {
  return compute_metrics(ConfusionMatrix::from_rows(rows));
}

// Channel-summed periodogram.
std::vector<double> periodogram(const Tensor& x) {
  const std::size_t len = x.rows();
  std::vector<double> power(len / 2 + 1, 0.0);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    Tensor col({len});
    for (std::size_t t = 0; t < len; ++t) col[t] = x(t, j);
    const ComplexTensor s = dft_oracle(col);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] += std::norm(s[k]);
  }
  return power;
}

// Class whose carrier bin holds the most power; ties go to the lowest class.
std::size_t nearest_carrier(const Tensor& x, const std::vector<std::size_t>& carriers) {
  const auto power = periodogram(x);
  std::size_t best = 0;
  for (std::size_t c = 1; c < carriers.size(); ++c)
    if (power[carriers[c]] > power[carriers[best]]) best = c;
  return best;
}

}  // namespace

TEST(FeatureFile, HandAssembledFixture) {
  const FeatureFile f = decode_feature_file(hand_fixture());
  EXPECT_EQ(f.id, "utt");
  EXPECT_EQ(f.label, 1u);
  EXPECT_EQ(f.features, Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(encode_feature_file(f), hand_fixture());
}

TEST(FeatureFile, ZlibCrcMatchesBitwiseOracle) {
  for (std::string_view s : {"", "a", "123456789", "The quick brown fox"}) {
    EXPECT_EQ(bytes::crc32_of(s), crc32_bitwise(s));
  }
  EXPECT_EQ(crc32_bitwise("123456789"), 0xCBF43926u);
}

TEST(FeatureFile, RoundTripThroughDisk) {
  const fs::path dir = scratch_dir("roundtrip");
  Rng rng(1);
  FeatureFile f{"x", Tensor({5, 4}), 2};
  for (double& v : f.features.data()) v = static_cast<float>(rng.normal());
  write_feature_file(dir / "x.tff", f);
  const FeatureFile g = load_feature_file(dir / "x.tff");
  EXPECT_EQ(g.id, f.id);
  EXPECT_EQ(g.label, f.label);
  EXPECT_EQ(g.features, f.features);
  EXPECT_EQ(read_file(dir / "x.tff"), encode_feature_file(g));
}

TEST(FeatureFile, TruncatedPayloadNamesLengths) {
  const std::string full = hand_fixture();
  try {
    decode_feature_file(std::string_view(full).substr(0, full.size() - 9));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 28"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found 19"), std::string::npos) << msg;
    EXPECT_EQ(e.offset(), 27u);
  }
}

TEST(FeatureFile, CorruptionDetected) {
  std::string bad = hand_fixture();
  bad[0] = 'X';
  EXPECT_THROW(decode_feature_file(bad), FormatError);
  bad = hand_fixture();
  bad[30] ^= 1;  // payload bit flip
  EXPECT_THROW(decode_feature_file(bad), FormatError);
  bad = hand_fixture() + "z";
  EXPECT_THROW(decode_feature_file(bad), FormatError);
  EXPECT_THROW(decode_feature_file("TF"), FormatError);
}

TEST(FeatureFile, NonFiniteRejectedWithOffset) {
  FeatureFile f{"n", Tensor::matrix(1, 2, {1.0, 0.0}), 0};
  std::string buf = encode_feature_file(f);
  // Overwrite the second float with NaN bits and fix the CRC.
  const std::size_t second = 4 + 4 + 4 + 1 + 12 + 4;
  const std::uint32_t nan_bits = 0x7FC00000u;
  for (int i = 0; i < 4; ++i) buf[second + i] = static_cast<char>(nan_bits >> (8 * i));
  const std::string payload = buf.substr(second - 4, 8);
  std::string crc;
  le32(crc, crc32_bitwise(payload));
  buf.replace(buf.size() - 4, 4, crc);
  try {
    decode_feature_file(buf);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), second);
  }
}

TEST(FeatureFile, LoadErrorsCarryPathOnce) {
  const fs::path dir = scratch_dir("paths");
  write_file(dir / "bad.tff", "TFF1");
  try {
    load_feature_file(dir / "bad.tff");
    FAIL();
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad.tff"), std::string::npos);
    EXPECT_EQ(msg.find("at byte"), msg.rfind("at byte"));
  }
  EXPECT_THROW(load_feature_file(dir / "missing.tff"), IoError);
}

TEST(FeatureFile, TextImport) {
  std::istringstream in("1 2 3\n4 5 6\n\n");
  const FeatureFile f = import_text_features(in, "t", 0);
  EXPECT_EQ(f.features, Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  std::istringstream ragged("1 2\n3\n");
  EXPECT_THROW(import_text_features(ragged, "r", 0), FormatError);
}

TEST(Manifest, ParsesNamesIdsAndHints) {
  const fs::path dir = scratch_dir("manifest");
  write_file(dir / "labels.json", R"({"classes": ["neutral", "happy", "angry"]})");
  write_file(dir / "m.csv", "path,label,fold_hint\na.tff,happy,1\nb.tff,2,\n/abs/c.tff,neutral,0\n");
  const DatasetManifest m = load_manifest(dir / "m.csv", dir / "labels.json");
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.entries[0].label, 1u);
  EXPECT_EQ(m.entries[0].fold_hint, 1);
  EXPECT_EQ(m.entries[1].label, 2u);
  EXPECT_FALSE(m.entries[1].fold_hint.has_value());
  EXPECT_EQ(m.resolve(m.entries[0]), dir / "a.tff");
  EXPECT_EQ(m.resolve(m.entries[2]), fs::path("/abs/c.tff"));
}

TEST(Manifest, Errors) {
  const fs::path dir = scratch_dir("manifest_err");
  write_file(dir / "labels.json", R"({"classes": ["a", "b"]})");
  write_file(dir / "bad_header.csv", "file,label\nx,a\n");
  EXPECT_THROW(load_manifest(dir / "bad_header.csv", dir / "labels.json"), FormatError);
  write_file(dir / "unknown.csv", "path,label,fold_hint\nx,zebra,\n");
  EXPECT_THROW(load_manifest(dir / "unknown.csv", dir / "labels.json"), FormatError);
  write_file(dir / "range.csv", "path,label,fold_hint\nx,7,\n");
  EXPECT_THROW(load_manifest(dir / "range.csv", dir / "labels.json"), ConfigError);
  write_file(dir / "dup.csv", "path,label,fold_hint\nx,a,\nx,b,\n");
  EXPECT_THROW(load_manifest(dir / "dup.csv", dir / "labels.json"), ConfigError);
  write_file(dir / "nolabels.json", R"({"names": []})");
  EXPECT_THROW(load_label_map(dir / "nolabels.json"), FormatError);
}

TEST(Manifest, DatasetLabelMismatch) {
  const fs::path dir = scratch_dir("dataset");
  const DatasetManifest m = write_dataset(dir, {{"u0", Tensor({2, 2}), 1}}, {"a", "b"});
  EXPECT_EQ(load_dataset(load_manifest(dir / "manifest.csv", dir / "labels.json")).size(), 1u);
  write_file(dir / "manifest.csv", "path,label,fold_hint\nu0.tff,a,\n");
  EXPECT_THROW(load_dataset(load_manifest(dir / "manifest.csv", dir / "labels.json")), MismatchError);
}

TEST(Folds, CountsAndDisjointness) {
  const std::vector<std::uint32_t> labels(10, 0);
  const auto folds = make_folds(labels, {}, 5, 3);
  ASSERT_EQ(folds.size(), 5u);
  std::set<std::size_t> seen;
  for (const auto& f : folds) {
    EXPECT_EQ(f.test.size(), 2u);
    for (std::size_t i : f.test) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_EQ(seen.size(), 10u);
}

TEST(Folds, Deterministic) {
  std::vector<std::uint32_t> labels;
  for (int i = 0; i < 37; ++i) labels.push_back(i % 3);
  const auto a = make_folds(labels, {}, 5, 9), b = make_folds(labels, {}, 5, 9);
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_EQ(a[f].test, b[f].test);
    EXPECT_EQ(a[f].train, b[f].train);
  }
}

TEST(Folds, Stratified) {
  std::vector<std::uint32_t> labels(20);
  for (std::size_t i = 0; i < 20; ++i) labels[i] = i < 10 ? 0 : 1;
  for (const auto& f : make_folds(labels, {}, 5, 4)) {
    const auto ones = std::count_if(f.test.begin(), f.test.end(), [&](std::size_t i) { return labels[i] == 1; });
    EXPECT_EQ(f.test.size(), 4u);
    EXPECT_EQ(ones, 2);
  }
}

TEST(Folds, PartitionProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n_folds = 2 + rng.below(5);
    const std::size_t n = n_folds + rng.below(40);
    std::vector<std::uint32_t> labels(n);
    for (auto& l : labels) l = static_cast<std::uint32_t>(rng.below(4));
    const auto folds = make_folds(labels, {}, n_folds, trial);
    std::vector<int> test_count(n, 0), train_count(n, 0);
    for (const auto& f : folds) {
      for (std::size_t i : f.test) ++test_count[i];
      for (std::size_t i : f.train) ++train_count[i];
      std::set<std::size_t> tr(f.train.begin(), f.train.end());
      for (std::size_t i : f.test) EXPECT_FALSE(tr.count(i));
    }
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(test_count[i], 1);
      EXPECT_EQ(train_count[i], static_cast<int>(n_folds) - 1);
    }
  }
}

TEST(Folds, HintsDefineFolds) {
  const std::vector<std::uint32_t> labels{0, 1, 0, 1, 0, 1};
  const std::vector<std::optional<int>> hints{7, 7, 3, 3, 9, 9};
  const auto folds = make_folds(labels, hints, 3, 0);
  EXPECT_EQ(folds[0].test, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(folds[1].test, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(folds[2].test, (std::vector<std::size_t>{4, 5}));
}

TEST(Folds, Errors) {
  const std::vector<std::uint32_t> labels{0, 1, 0};
  EXPECT_THROW(make_folds(labels, {}, 5, 0), std::invalid_argument);
  EXPECT_THROW(make_folds(labels, {}, 1, 0), std::invalid_argument);
}

TEST(Synth, Deterministic) {
  SyntheticSpec spec;
  spec.per_class = 3;
  spec.seed = 17;
  const auto a = synth_generate(spec), b = synth_generate(spec);
  ASSERT_EQ(a.size(), 12u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(encode_feature_file(a[i]), encode_feature_file(b[i]));
  spec.seed = 18;
  EXPECT_NE(encode_feature_file(synth_generate(spec)[0]), encode_feature_file(a[0]));
}

TEST(Synth, NoiselessCarrierOracleIsPerfect) {
  SyntheticSpec spec;
  spec.per_class = 10;
  spec.noise = 0.0;
  for (const auto& f : synth_generate(spec)) {
    EXPECT_EQ(nearest_carrier(f.features, spec.carrier_bins), f.label) << f.id;
  }
}

TEST(Synth, SharedCarrierLeavesOracleAtChance) {
  SyntheticSpec spec;
  spec.per_class = 25;
  spec.carrier_bins = {5, 5, 5, 5};
  std::size_t hits = 0, n = 0;
  for (const auto& f : synth_generate(spec)) {
    hits += nearest_carrier(f.features, spec.carrier_bins) == f.label;
    ++n;
  }
  EXPECT_NEAR(static_cast<double>(hits) / n, 1.0 / spec.classes, 0.05);
}

TEST(Synth, SpecValidation) {
  SyntheticSpec spec;
  spec.carrier_bins = {3, 7, 11, 40};
  EXPECT_THROW(synth_generate(spec), ConfigError);
  spec = SyntheticSpec{};
  spec.envelopes = {1, 2};
  EXPECT_THROW(synth_generate(spec), ConfigError);
}

TEST(Synth, JsonRoundTrip) {
  SyntheticSpec spec;
  spec.noise = 0.7;
  spec.carrier_bins = {1, 2, 3, 4};
  nlohmann::json j = spec;
  const SyntheticSpec back = j.get<SyntheticSpec>();
  EXPECT_EQ(back.noise, 0.7);
  EXPECT_EQ(back.carrier_bins, spec.carrier_bins);
}

TEST(Metrics, Diagonal) {
  const auto r = metrics_of({{3, 0, 0}, {0, 5, 0}, {0, 0, 1}});
  EXPECT_EQ(r.wa, 1.0);
  EXPECT_EQ(r.ua, 1.0);
  EXPECT_EQ(r.wf1, 1.0);
}

TEST(Metrics, HandComputedTwoClass) {
  const auto r = metrics_of({{2, 0}, {1, 1}});
  EXPECT_NEAR(r.wa, 0.75, 1e-12);
  EXPECT_NEAR(r.ua, 0.75, 1e-12);
  // Class 0: P = 2/3, R = 1, F1 = 0.8. Class 1: P = 1, R = 0.5, F1 = 2/3.
  EXPECT_NEAR(r.wf1, 0.5 * 0.8 + 0.5 * (2.0 / 3.0), 1e-12);
  EXPECT_NEAR(r.wf1, 0.7333, 5e-5);
}

TEST(Metrics, TotalMiss) {
  const auto r = metrics_of({{0, 2}, {2, 0}});
  EXPECT_EQ(r.wa, 0.0);
  EXPECT_EQ(r.ua, 0.0);
  EXPECT_EQ(r.wf1, 0.0);
}

TEST(Metrics, ZeroSupportExcludedFromUa) {
  const auto r = metrics_of({{3, 1, 0}, {0, 0, 0}, {0, 1, 1}});
  EXPECT_NEAR(r.ua, (0.75 + 0.5) / 2.0, 1e-15);
  EXPECT_NEAR(r.wa, 4.0 / 6.0, 1e-15);
}

TEST(Metrics, AllZeroRejected) {
  EXPECT_THROW(metrics_of({{0, 0}, {0, 0}}), std::invalid_argument);
}

TEST(Metrics, PermutationInvarianceAndBounds) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.below(5);
    std::vector<std::vector<std::uint64_t>> rows(k, std::vector<std::uint64_t>(k));
    for (auto& row : rows)
      for (auto& v : row) v = rng.below(3) == 0 ? 0 : rng.below(20);
    rows[0][0] += 1;
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<std::vector<std::uint64_t>> permuted(k, std::vector<std::uint64_t>(k));
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) permuted[perm[i]][perm[j]] = rows[i][j];
    const auto a = metrics_of(rows), b = metrics_of(permuted);
    EXPECT_EQ(a.wa, b.wa);
    EXPECT_NEAR(a.ua, b.ua, 1e-12);
    EXPECT_NEAR(a.wf1, b.wf1, 1e-12);
    for (double m : {a.wa, a.ua, a.wf1}) {
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, 1.0);
    }
  }
}

TEST(Metrics, Summary) {
  const auto s = summarize({0.5, 0.7, 0.9});
  EXPECT_NEAR(s.mean, 0.7, 1e-15);
  EXPECT_NEAR(s.stddev, std::sqrt((0.04 + 0 + 0.04) / 3.0), 1e-15);
}
