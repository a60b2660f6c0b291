// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfmamba/checkpoint.hpp"
#include "tfmamba/config.hpp"
#include "tfmamba/data.hpp"
#include "tfmamba/losses.hpp"
#include "tfmamba/metrics.hpp"
#include "tfmamba/model.hpp"

namespace tfmamba {

struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

/// One AdamW update: decoupled decay theta *= (1 - lr wd), then the
/// bias-corrected Adam step lr * m_hat / (sqrt(v_hat) + eps).
inline void adamw_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                       AdamWState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeMismatch("adamw_step: params vs grads count");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw ShapeMismatch("adamw_step: optimizer state size");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || state.m[i].shape() != grads[i].shape()) {
      throw ShapeMismatch("adamw_step: shape mismatch at parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] *= decay;
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mh = m[j] / c1;
      const double vh = v[j] / c2;
      p[j] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

struct TrainState {
  ModelConfig model;
  ModelWeights<Tensor> weights;
  AdamWState opt;
};

inline TrainState make_train_state(const ModelConfig& cfg, std::uint64_t seed) {
  return {cfg, init_model(cfg, seed), {}};
}

inline std::vector<Tensor*> param_refs(ModelWeights<Tensor>& w, const ModelConfig& cfg) {
  std::vector<Tensor*> out;
  visit_model(w, cfg, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

inline std::vector<std::string> param_names(const ModelWeights<Tensor>& w, const ModelConfig& cfg) {
  std::vector<std::string> out;
  visit_model(w, cfg, [&](const std::string& n, const Tensor&) { out.push_back(n); });
  return out;
}

/// Contrastive weight actually applied for the configured variant.
inline double effective_lambda(const ModelConfig& model, const TrainConfig& train) {
  return variant_uses_contrastive(model.variant) ? train.lambda : 0.0;
}

struct EpochStats {
  double ce = 0.0;
  double cmdt = 0.0;
  double total = 0.0;
};

struct BatchGradients {
  double ce = 0.0;
  double cmdt = 0.0;
  double total = 0.0;
  std::vector<Tensor> grads;
};

/// Loss and gradients of ce_mean + lambda * cmdt over one batch.
inline BatchGradients batch_gradients(const TrainState& state, std::span<const FeatureFile> data,
                                      std::span<const std::size_t> batch, const TrainConfig& cfg) {
  Tape tape(true);
  const ModelWeights<Var> vars = bind_model(tape, state.weights, state.model, true);
  std::vector<Var> ce_terms, pooled;
  std::vector<std::size_t> labels;
  for (std::size_t idx : batch) {
    const FeatureFile& f = data[idx];
    const ForwardVars out = model_forward(tape.constant(f.features), vars, state.model);
    ce_terms.push_back(ad::cross_entropy(out.logits, f.label));
    pooled.push_back(out.pooled);
    labels.push_back(f.label);
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const Var ce = ad::scale(ad::add_n(ce_terms), inv_n);
  const double lambda = effective_lambda(state.model, cfg);
  const LossConfig lcfg{cfg.tau, lambda};
  BatchGradients out;
  Var total = ce;
  if (lambda > 0.0) {
    const Var cm = cmdt_loss(ad::stack_rows(pooled), labels, vars.prototypes, lcfg);
    total = ad::add(ce, ad::scale(cm, lambda));
    out.cmdt = cm.value()[0];
  } else {
    // Reported only; kept off the tape so it cannot influence gradients.
    Tensor stacked({pooled.size(), pooled[0].value().size()});
    for (std::size_t i = 0; i < pooled.size(); ++i)
      for (std::size_t j = 0; j < stacked.cols(); ++j) stacked(i, j) = pooled[i].value()[j];
    out.cmdt = cmdt_loss(stacked, labels, PrototypeBank{state.weights.prototypes}, lcfg);
  }
  out.ce = ce.value()[0];
  out.total = total.value()[0];
  if (!std::isfinite(out.total)) throw NumericError("loss");
  tape.backward(total);
  std::vector<Var> leaves;
  visit_model(vars, state.model, [&](const std::string&, const Var& v) { leaves.push_back(v); });
  const auto names = param_names(state.weights, state.model);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    out.grads.push_back(tape.grad(leaves[i]));
    if (!all_finite(out.grads.back())) throw NumericError("grad:" + names[i]);
  }
  return out;
}

/// Seeded batch order for one epoch.
inline std::vector<std::size_t> epoch_order(std::span<const std::size_t> slice, std::uint64_t seed,
                                            std::size_t epoch) {
  std::vector<std::size_t> order(slice.begin(), slice.end());
  Rng rng(Rng::derive(seed, epoch));
  rng.shuffle(order);
  return order;
}

inline EpochStats train_epoch(TrainState& state, std::span<const FeatureFile> data,
                              std::span<const std::size_t> slice, const TrainConfig& cfg,
                              std::size_t epoch) {
  if (slice.empty()) throw std::invalid_argument("train_epoch: empty slice");
  cfg.validate();
  const auto order = epoch_order(slice, cfg.seed, epoch);
  EpochStats stats;
  auto refs = param_refs(state.weights, state.model);
  const auto names = param_names(state.weights, state.model);
  for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
    const std::size_t end = std::min(order.size(), start + cfg.batch);
    const std::span<const std::size_t> batch(order.data() + start, end - start);
    BatchGradients bg = batch_gradients(state, data, batch, cfg);
    adamw_step(refs, bg.grads, state.opt, cfg);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (!all_finite(*refs[i])) throw NumericError(names[i]);
    }
    const double w = static_cast<double>(batch.size());
    stats.ce += bg.ce * w;
    stats.cmdt += bg.cmdt * w;
    stats.total += bg.total * w;
  }
  const double n = static_cast<double>(order.size());
  stats.ce /= n;
  stats.cmdt /= n;
  stats.total /= n;
  return stats;
}

inline ModelConfig with_gate_mode(ModelConfig cfg, GateMode mode) {
  cfg.block.gate_mode = mode;
  return cfg;
}

/// Argmax predictions (ties to the lowest id) tallied into a report.
inline MetricsReport evaluate(const ModelConfig& cfg, const ModelWeights<Tensor>& weights,
                              std::span<const FeatureFile> data, std::span<const std::size_t> slice) {
  if (slice.empty()) throw std::invalid_argument("evaluate: empty slice");
  ConfusionMatrix cm(cfg.classes);
  for (std::size_t idx : slice) {
    const auto out = model_forward(data[idx].features, weights, cfg);
    if (data[idx].label >= cfg.classes) throw MismatchError("evaluate: label outside model classes");
    cm.add(data[idx].label, argmax(out.logits.data()));
  }
  return compute_metrics(cm);
}

inline MetricsReport evaluate(const TrainState& state, std::span<const FeatureFile> data,
                              std::span<const std::size_t> slice, GateMode mode = GateMode::soft) {
  return evaluate(with_gate_mode(state.model, mode), state.weights, data, slice);
}

struct EpochLogRow {
  std::size_t epoch = 0;
  EpochStats stats;
  MetricsReport eval;
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t best_epoch = 0;
  MetricsReport best;
  std::vector<EpochLogRow> log;
  Checkpoint checkpoint;
};

struct FitResult {
  std::vector<FoldResult> folds;
  MetricSummary wa, ua, wf1;
  std::size_t param_count = 0;
};

inline std::string training_log_csv(const std::vector<EpochLogRow>& log) {
  std::string out = "epoch,ce,cmdt,total,eval_wa,eval_ua,eval_wf1\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.stats.ce,
                  r.stats.cmdt, r.stats.total, r.eval.wa, r.eval.ua, r.eval.wf1);
    out += buf;
  }
  return out;
}

inline std::string fold_metrics_csv(const FitResult& fit) {
  std::string out = "fold,wa,ua,wf1\n";
  char buf[160];
  for (const auto& f : fit.folds) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", f.fold, f.best.wa, f.best.ua, f.best.wf1);
    out += buf;
  }
  return out;
}

inline json aggregate_json(const FitResult& fit, const ModelConfig& cfg) {
  json folds = json::array();
  for (const auto& f : fit.folds) {
    folds.push_back({{"fold", f.fold}, {"best_epoch", f.best_epoch}, {"wa", f.best.wa},
                     {"ua", f.best.ua}, {"wf1", f.best.wf1}});
  }
  return {{"variant", variant_name(cfg.variant)},
          {"param_count", fit.param_count},
          {"folds", folds},
          {"mean", {{"wa", fit.wa.mean}, {"ua", fit.ua.mean}, {"wf1", fit.wf1.mean}}},
          {"std", {{"wa", fit.wa.stddev}, {"ua", fit.ua.stddev}, {"wf1", fit.wf1.stddev}}}};
}

/// Called after each epoch: (fold, log row).
using EpochCallback = std::function<void(std::size_t, const EpochLogRow&)>;

/// Cross-validated training. Each fold starts from a fresh seeded init; the
/// test-fold best-WA epoch is kept. If `out_dir` is set, each fold's log and
/// best checkpoint are written to out_dir/fold_<k>/.
inline FitResult fit(std::span<const FeatureFile> data, const DatasetManifest& manifest,
                     const ModelConfig& model_cfg, const TrainConfig& train_cfg, std::size_t n_folds,
                     const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                     const EpochCallback& on_epoch = {}) {
  model_cfg.validate();
  train_cfg.validate();
  if (manifest.class_count() != model_cfg.classes) {
    throw MismatchError("label map has " + std::to_string(manifest.class_count()) +
                        " classes, model expects " + std::to_string(model_cfg.classes));
  }
  if (data.size() != manifest.entries.size()) throw MismatchError("dataset and manifest sizes differ");
  const auto folds = make_folds(manifest, n_folds, train_cfg.seed);
  FitResult result;
  result.param_count = param_count(model_cfg);
  std::vector<double> was, uas, wf1s;
  for (const FoldSplit& split : folds) {
    if (split.train.empty() || split.test.empty()) {
      throw std::invalid_argument("fit: fold " + std::to_string(split.fold) + " is empty");
    }
    const std::uint64_t fold_seed = Rng::derive(train_cfg.seed, 1000 + split.fold);
    TrainState state = make_train_state(model_cfg, fold_seed);
    TrainConfig cfg = train_cfg;
    cfg.seed = fold_seed;
    FoldResult fr;
    fr.fold = split.fold;
    bool have_best = false;
    ModelWeights<Tensor> best_weights = state.weights;
    std::uint64_t best_step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      EpochLogRow row;
      row.epoch = epoch;
      row.stats = train_epoch(state, data, split.train, cfg, epoch);
      row.eval = evaluate(state, data, split.test, cfg.eval_gate_mode);
      if (!have_best || row.eval.wa > fr.best.wa) {
        have_best = true;
        fr.best = row.eval;
        fr.best_epoch = epoch;
        best_weights = state.weights;
        best_step = state.opt.step;
      }
      if (on_epoch) on_epoch(split.fold, row);
      fr.log.push_back(std::move(row));
    }
    if (!have_best) {
      fr.best = evaluate(state, data, split.test, cfg.eval_gate_mode);
    }
    fr.checkpoint = Checkpoint{with_gate_mode(model_cfg, cfg.eval_gate_mode), best_weights,
                               manifest.classes, best_step, fold_seed,
                               SplitInfo{split.fold, n_folds, train_cfg.seed}};
    if (out_dir) {
      const auto dir = *out_dir / ("fold_" + std::to_string(split.fold));
      std::error_code ec;
      std::filesystem::create_directories(dir, ec);
      if (ec) throw IoError("cannot create '" + dir.string() + "'");
      write_file(dir / "train_log.csv", training_log_csv(fr.log));
      save_checkpoint(dir / "best.ckpt", fr.checkpoint);
    }
    was.push_back(fr.best.wa);
    uas.push_back(fr.best.ua);
    wf1s.push_back(fr.best.wf1);
    result.folds.push_back(std::move(fr));
  }
  result.wa = summarize(was);
  result.ua = summarize(uas);
  result.wf1 = summarize(wf1s);
  return result;
}

}  // namespace tfmamba
