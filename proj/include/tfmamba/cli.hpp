// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

// Command-line driver. Exit codes:
//   0 ok, 1 internal error, 2 config, 3 I/O, 4 semantic mismatch,
//   5 numeric failure (non-finite tensor, named in the message).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tfmamba/bench.hpp"
#include "tfmamba/checkpoint.hpp"
#include "tfmamba/config.hpp"
#include "tfmamba/data.hpp"
#include "tfmamba/trainer.hpp"

namespace tfmamba::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfigError = 2,
  kIoError = 3,
  kMismatch = 4,
  kNumeric = 5,
};

struct GlobalOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
};

inline json load_json_file(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file '" + path.string() + "'");
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// File config, then --set overrides in order, then --out / --seed.
inline RunConfig resolve_config(const GlobalOptions& g) {
  json j = g.config.empty() ? json::object() : load_json_file(g.config);
  for (const auto& s : g.sets) apply_override(j, s);
  RunConfig rc = run_config_from_json(j);
  if (!g.out.empty()) rc.out = g.out;
  if (g.seed) rc.train.seed = *g.seed;
  rc.model.validate();
  rc.train.validate();
  if (rc.n_folds < 2) throw ConfigError("n_folds: must be >= 2");
  return rc;
}

inline void print_dump(std::ostream& out, const std::string& command, const json& args, const json& config) {
  out << "# resolved config\n"
      << json{{"command", command}, {"args", args}, {"config", config}}.dump(2) << "\n";
}

inline void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw ConfigError(what + ": path required");
  if (!fs::is_regular_file(p)) throw IoError("missing " + what + " '" + p.string() + "'");
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

inline void check_dims(const std::vector<FeatureFile>& data, std::size_t input_dim) {
  for (const auto& f : data) {
    if (f.dim() != input_dim) {
      throw MismatchError(f.id + ": feature width " + std::to_string(f.dim()) + " but model.input_dim is " +
                          std::to_string(input_dim));
    }
  }
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& classes) {
  std::ostringstream os;
  os << "truth\\pred";
  for (const auto& c : classes) os << ',' << c;
  os << '\n';
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    os << classes[i];
    for (std::size_t j = 0; j < cm.classes(); ++j) os << ',' << cm.at(i, j);
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

inline int cmd_train(const GlobalOptions& g, std::ostream& out) {
  const RunConfig rc = resolve_config(g);
  print_dump(out, "train", json::object(), to_json_value(rc));
  require_file(rc.manifest, "manifest");
  require_file(rc.label_map_path(), "label map");
  const DatasetManifest manifest = load_manifest(rc.manifest, rc.label_map_path());
  if (manifest.class_count() != rc.model.classes) {
    throw MismatchError("label map has " + std::to_string(manifest.class_count()) + " classes, model.classes is " +
                        std::to_string(rc.model.classes));
  }
  const auto data = load_dataset(manifest);
  check_dims(data, rc.model.input_dim);
  const fs::path dir(rc.out);
  ensure_dir(dir);
  write_file(dir / "config.json", to_json_value(rc).dump(2) + "\n");
  const FitResult result = fit(data, manifest, rc.model, rc.train, rc.n_folds, dir,
                               [&](std::size_t fold, const EpochLogRow& row) {
                                 out << "fold " << fold << " epoch " << row.epoch << " loss "
                                     << fmt(row.stats.total) << " wa " << fmt(row.eval.wa) << "\n";
                               });
  const json agg = aggregate_json(result, rc.model);
  write_file(dir / "aggregate.json", agg.dump(2) + "\n");
  write_file(dir / "fold_metrics.csv", fold_metrics_csv(result));
  out << "WA " << fmt(result.wa.mean) << " UA " << fmt(result.ua.mean) << " WF1 " << fmt(result.wf1.mean)
      << " params " << result.param_count << "\n";
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string subset = "all";
};

inline int cmd_eval(const GlobalOptions& g, const EvalArgs& a, std::ostream& out) {
  RunConfig rc = resolve_config(g);
  if (!a.manifest.empty()) rc.manifest = a.manifest;
  print_dump(out, "eval", {{"checkpoint", a.checkpoint}, {"subset", a.subset}}, to_json_value(rc));
  if (a.subset != "all" && a.subset != "test") throw ConfigError("--subset: expected all or test");
  require_file(a.checkpoint, "checkpoint");
  require_file(rc.manifest, "manifest");
  require_file(rc.label_map_path(), "label map");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const DatasetManifest manifest = load_manifest(rc.manifest, rc.label_map_path());
  if (ck.classes != manifest.classes) {
    throw MismatchError("label map mismatch: checkpoint has " + std::to_string(ck.classes.size()) +
                        " classes, manifest has " + std::to_string(manifest.class_count()));
  }
  const auto data = load_dataset(manifest);
  check_dims(data, ck.config.input_dim);
  std::vector<std::size_t> slice(data.size());
  for (std::size_t i = 0; i < slice.size(); ++i) slice[i] = i;
  if (a.subset == "test") {
    if (!ck.split) throw ConfigError("--subset test: checkpoint carries no split");
    slice = make_folds(manifest, ck.split->n_folds, ck.split->seed).at(ck.split->fold).test;
  }
  const MetricsReport r = evaluate(ck.config, ck.weights, data, slice);
  out << "WA " << fmt(r.wa) << " UA " << fmt(r.ua) << " WF1 " << fmt(r.wf1) << "\n";
  const fs::path dir(rc.out);
  ensure_dir(dir);
  write_file(dir / "confusion.csv", confusion_csv(r.confusion, ck.classes));
  write_file(dir / "metrics.json",
             json{{"wa", r.wa}, {"ua", r.ua}, {"wf1", r.wf1}, {"n", slice.size()}}.dump(2) + "\n");
  return kOk;
}

struct BenchArgs {
  std::vector<std::size_t> lengths{64, 256, 1024};
  BenchOptions opt;
  SsdBenchShape ssd;
  bool skip_model = false;
};

inline int cmd_bench(const GlobalOptions& g, const BenchArgs& a, std::ostream& out) {
  const RunConfig rc = resolve_config(g);
  print_dump(out, "bench",
             {{"lengths", a.lengths},
              {"warmup", a.opt.warmup},
              {"reps", a.opt.reps},
              {"ssd", {{"channels", a.ssd.channels}, {"groups", a.ssd.groups},
                       {"state_dim", a.ssd.state_dim}, {"chunk", a.ssd.chunk}}},
              {"skip_model", a.skip_model}},
             to_json_value(rc));
  if (a.lengths.empty() || a.opt.reps == 0) throw ConfigError("bench: need at least one length and rep");
  const fs::path dir(rc.out);
  ensure_dir(dir);
  std::ostringstream ssd_csv, model_csv;
  ssd_csv << "algorithm,L,channels,groups,state_dim,chunk,median_ms,max_abs_diff,speedup_vs_materialized\n";
  out << "algorithm      L      median_ms  max_abs_diff\n";
  for (std::size_t len : a.lengths) {
    SsdBenchShape shape = a.ssd;
    shape.length = len;
    const auto rows = bench_ssd(shape, a.opt, rc.train.seed);
    const auto& mat = rows[1].median_ms;
    for (const auto& r : rows) {
      auto opt_str = [](const std::optional<double>& v) {
        if (!v) return std::string("NA");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6g", *v);
        return std::string(buf);
      };
      std::optional<double> speedup;
      if (mat && r.median_ms && *r.median_ms > 0) speedup = *mat / *r.median_ms;
      ssd_csv << r.algorithm << ',' << len << ',' << shape.channels << ',' << shape.groups << ','
              << shape.state_dim << ',' << shape.chunk << ',' << opt_str(r.median_ms) << ','
              << opt_str(r.max_abs_diff) << ',' << opt_str(speedup) << '\n';
      char line[128];
      std::snprintf(line, sizeof(line), "%-12s %6zu %12s %12s\n", r.algorithm.c_str(), len,
                    opt_str(r.median_ms).c_str(), opt_str(r.max_abs_diff).c_str());
      out << line;
    }
  }
  write_file(dir / "bench_ssd.csv", ssd_csv.str());
  if (!a.skip_model) {
    model_csv << "variant,L,param_count,median_ms\n";
    for (std::size_t len : a.lengths) {
      const auto r = bench_model(rc.model, len, a.opt, rc.train.seed);
      model_csv << variant_name(rc.model.variant) << ',' << len << ',' << r.param_count << ','
                << r.median_ms << '\n';
      out << "model L=" << len << " params " << r.param_count << " median_ms " << r.median_ms << "\n";
    }
    write_file(dir / "bench_model.csv", model_csv.str());
  }
  write_file(dir / "hardware.json", hardware_metadata().dump(2) + "\n");
  return kOk;
}

struct InspectArgs {
  std::string checkpoint;
  std::string input;
};

inline int cmd_inspect(const GlobalOptions& g, const InspectArgs& a, std::ostream& out) {
  const RunConfig rc = resolve_config(g);
  print_dump(out, "inspect", {{"checkpoint", a.checkpoint}, {"input", a.input}}, to_json_value(rc));
  require_file(a.checkpoint, "checkpoint");
  require_file(a.input, "feature file");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  if (block_count(ck.config) == 0) {
    throw ConfigError("inspect: variant " + std::string(variant_name(ck.config.variant)) + " has no TF block");
  }
  const FeatureFile f = load_feature_file(a.input);
  check_dims({f}, ck.config.input_dim);
  TfBlockTrace trace;
  model_forward(f.features, ck.weights, ck.config, &trace);
  const fs::path dir(rc.out);
  ensure_dir(dir);

  auto row_norms = [](const Tensor& m, std::size_t t) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += m(t, j) * m(t, j);
    return std::sqrt(s);
  };
  std::ostringstream inten;
  inten << "token,before,after\n";
  for (std::size_t t = 0; t < trace.temporal_in.rows(); ++t) {
    inten << t << ',' << row_norms(trace.temporal_in, t) << ',' << row_norms(trace.temporal_out, t) << '\n';
  }
  write_file(dir / "intensity.csv", inten.str());
  out << "wrote " << (dir / "intensity.csv").string() << "\n";

  if (trace.spectrum_before.size() == 0) {
    out << "no frequency branch in variant " << variant_name(ck.config.variant) << "; spectrum.csv skipped\n";
    return kOk;
  }
  auto row_mean = [](const Tensor& m, std::size_t k) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += m(k, j);
    return s / static_cast<double>(m.cols());
  };
  std::ostringstream spec;
  spec << "bin,before,after\n";
  for (std::size_t k = 0; k < trace.spectrum_before.rows(); ++k) {
    spec << k << ',' << row_mean(trace.spectrum_before, k) << ',' << row_mean(trace.spectrum_after, k) << '\n';
  }
  write_file(dir / "spectrum.csv", spec.str());
  out << "wrote " << (dir / "spectrum.csv").string() << "\n";
  return kOk;
}

struct SynthArgs {
  std::string spec;
};

inline int cmd_synth(const GlobalOptions& g, const SynthArgs& a, std::ostream& out) {
  SyntheticSpec spec;
  if (!a.spec.empty()) {
    const json j = load_json_file(a.spec);
    try {
      spec = j.get<SyntheticSpec>();
    } catch (const json::exception& e) {
      throw ConfigError(a.spec + ": " + e.what());
    }
  }
  for (const auto& s : g.sets) {
    json j = spec;
    apply_override(j, s);
    try {
      spec = j.get<SyntheticSpec>();
    } catch (const json::exception& e) {
      throw ConfigError("--set " + s + ": " + e.what());
    }
  }
  if (g.seed) spec.seed = *g.seed;
  const std::string dir = g.out.empty() ? RunConfig{}.out : g.out;
  print_dump(out, "synth", {{"spec", a.spec}}, {{"synth", spec}, {"out", dir}});
  spec.validate();
  const auto files = synth_generate(spec);
  write_dataset(dir, files, default_class_names(spec.classes));
  write_file(fs::path(dir) / "synth_spec.json", json(spec).dump(2) + "\n");
  out << "wrote " << files.size() << " feature files to " << dir << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

/// Parses `args` (without the program name) and runs one subcommand.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"TF-Mamba speech emotion recognition toolkit", "tfmamba"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "JSON run config");
  app.add_option("--set", g.sets, "KEY=VALUE override, dotted path (repeatable)")->allow_extra_args(false);
  app.add_option("--out", g.out, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "base seed");

  auto* train = app.add_subcommand("train", "cross-validated training");
  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ea.checkpoint)->required();
  eval->add_option("--manifest", ea.manifest, "overrides data.manifest");
  eval->add_option("--subset", ea.subset, "all | test (the checkpoint's held-out fold)");
  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "latency and parameter report");
  bench->add_option("--lengths", ba.lengths)->delimiter(',');
  bench->add_option("--reps", ba.opt.reps);
  bench->add_option("--warmup", ba.opt.warmup);
  bench->add_option("--ssd-channels", ba.ssd.channels);
  bench->add_option("--ssd-groups", ba.ssd.groups);
  bench->add_option("--ssd-state", ba.ssd.state_dim);
  bench->add_option("--ssd-chunk", ba.ssd.chunk);
  bench->add_flag("--skip-model", ba.skip_model);
  InspectArgs ia;
  auto* inspect = app.add_subcommand("inspect", "temporal intensity and gate spectra for one input");
  inspect->add_option("--checkpoint", ia.checkpoint)->required();
  inspect->add_option("--input", ia.input)->required();
  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--spec", sa.spec, "SyntheticSpec JSON");

  std::vector<std::string> argv_store{"tfmamba"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (train->parsed()) return cmd_train(g, out);
    if (eval->parsed()) return cmd_eval(g, ea, out);
    if (bench->parsed()) return cmd_bench(g, ba, out);
    if (inspect->parsed()) return cmd_inspect(g, ia, out);
    if (synth->parsed()) return cmd_synth(g, sa, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ResourceLimit& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const FormatError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const MismatchError& e) {
    err << "mismatch: " << e.what() << "\n";
    return kMismatch;
  } catch (const ShapeMismatch& e) {
    err << "mismatch: " << e.what() << "\n";
    return kMismatch;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}

}  // namespace tfmamba::cli
