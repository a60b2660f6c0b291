// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

// Runs the three SSD algorithms on one random instance and prints their
// agreement and median latency.
//
//   demo_ssd_scan [L] [channels] [state_dim] [chunk]

#include <cstdio>
#include <cstdlib>

#include "tfmamba/bench.hpp"

int main(int argc, char** argv) {
  tfmamba::SsdBenchShape shape;
  shape.length = 1024;
  if (argc > 1) shape.length = std::strtoul(argv[1], nullptr, 10);
  if (argc > 2) shape.channels = std::strtoul(argv[2], nullptr, 10);
  if (argc > 3) shape.state_dim = std::strtoul(argv[3], nullptr, 10);
  if (argc > 4) shape.chunk = std::strtoul(argv[4], nullptr, 10);

  std::printf("L=%zu D'=%zu G=%zu d=%zu chunk=%zu\n", shape.length, shape.channels, shape.groups,
              shape.state_dim, shape.chunk);
  const auto rows = tfmamba::bench_ssd(shape, {2, 9}, 1);
  std::printf("%-14s %12s %14s\n", "algorithm", "median ms", "max |y - seq|");
  for (const auto& r : rows) {
    if (!r.median_ms) {
      std::printf("%-14s %12s %14s\n", r.algorithm.c_str(), "skipped", "-");
      continue;
    }
    std::printf("%-14s %12.3f %14.3e\n", r.algorithm.c_str(), *r.median_ms, r.max_abs_diff.value_or(0.0));
  }
  return 0;
}
