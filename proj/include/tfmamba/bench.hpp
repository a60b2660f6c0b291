// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tfmamba/model.hpp"
#include "tfmamba/rng.hpp"
#include "tfmamba/ssd.hpp"

namespace tfmamba {

struct BenchOptions {
  std::size_t warmup = 5;
  std::size_t reps = 31;
};

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median_of: empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Median wall-clock milliseconds of `fn`, warmup runs discarded.
template <class F>
double time_median_ms(F&& fn, const BenchOptions& opt) {
  for (std::size_t i = 0; i < opt.warmup; ++i) fn();
  std::vector<double> ms;
  ms.reserve(opt.reps);
  for (std::size_t i = 0; i < opt.reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return median_of(std::move(ms));
}

struct SsdBenchShape {
  std::size_t length = 2048;
  std::size_t channels = 64;  // D'
  std::size_t groups = 1;
  std::size_t state_dim = 16;
  std::size_t chunk = 64;
};

inline SsdInputs random_ssd_inputs(const SsdBenchShape& s, std::uint64_t seed) {
  Rng rng(seed);
  SsdInputs in;
  in.groups = s.groups;
  in.X = Tensor({s.length, s.channels});
  in.A = Tensor({s.length, s.channels});
  in.B = Tensor({s.length, s.groups * s.state_dim});
  in.C = Tensor({s.length, s.groups * s.state_dim});
  for (double& v : in.X.data()) v = rng.normal();
  for (double& v : in.A.data()) v = rng.uniform(0.8, 1.0);
  for (double& v : in.B.data()) v = rng.normal() / std::sqrt(static_cast<double>(s.state_dim));
  for (double& v : in.C.data()) v = rng.normal();
  return in;
}

struct SsdBenchRow {
  std::string algorithm;
  std::size_t length = 0;
  std::optional<double> median_ms;      // empty when the algorithm refused the size
  std::optional<double> max_abs_diff;   // against ssd_sequential
};

/// Times the three scan algorithms on one seeded instance.
inline std::vector<SsdBenchRow> bench_ssd(const SsdBenchShape& shape, const BenchOptions& opt,
                                          std::uint64_t seed) {
  const SsdInputs in = random_ssd_inputs(shape, seed);
  const Tensor ref = ssd_sequential(in);
  auto diff = [&](const Tensor& y) {
    double m = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) m = std::max(m, std::abs(y[i] - ref[i]));
    return m;
  };
  std::vector<SsdBenchRow> rows;
  {
    Tensor sink;
    SsdBenchRow r{"sequential", shape.length, {}, 0.0};
    r.median_ms = time_median_ms([&] { sink = ssd_sequential(in); }, opt);
    rows.push_back(r);
  }
  {
    SsdBenchRow r{"materialized", shape.length, {}, {}};
    if (shape.length <= kMaxMaterializedLength) {
      Tensor sink;
      r.median_ms = time_median_ms([&] { sink = ssd_dual_materialized(in); }, opt);
      r.max_abs_diff = diff(sink);
    }
    rows.push_back(r);
  }
  {
    Tensor sink;
    SsdBenchRow r{"chunked", shape.length, {}, {}};
    r.median_ms = time_median_ms([&] { sink = ssd_chunked(in, {shape.chunk}); }, opt);
    r.max_abs_diff = diff(sink);
    rows.push_back(r);
  }
  return rows;
}

struct ModelBenchRow {
  std::size_t length = 0;
  std::size_t param_count = 0;
  double median_ms = 0.0;
};

/// Forward latency of one utterance of length L with seeded weights.
inline ModelBenchRow bench_model(const ModelConfig& cfg, std::size_t length, const BenchOptions& opt,
                                 std::uint64_t seed) {
  const auto w = init_model(cfg, seed);
  Rng rng(Rng::derive(seed, length));
  Tensor x({length, cfg.input_dim});
  for (double& v : x.data()) v = rng.normal();
  ForwardResult sink;
  const double ms = time_median_ms([&] { sink = model_forward(x, w, cfg); }, opt);
  return {length, param_count(cfg), ms};
}

inline std::string cpu_model_name() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) return line.substr(line.find_first_not_of(' ', colon + 1));
    }
  }
  return "unknown";
}

inline nlohmann::json hardware_metadata() {
  std::string compiler = "unknown";
#if defined(__clang__)
  compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  compiler = "gcc " __VERSION__;
#endif
  return {{"cpu", cpu_model_name()},
          {"hardware_threads", std::thread::hardware_concurrency()},
          {"threads_used", 1},
          {"compiler", compiler},
          {"precision", "float64"}};
}

}  // namespace tfmamba
