// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tfmamba/autodiff.hpp"
#include "tfmamba/rng.hpp"
#include "tfmamba/tensor.hpp"
#include "tfmamba/tf_block.hpp"

namespace tfmamba {

/// Ablation ladder. Each rung adds one component to the previous.
enum class Variant {
  baseline,            ///< pooled embeddings -> classifier
  attn,                ///< + self-attention encoder
  attn_temporal,       ///< + temporal-domain block
  attn_temporal_freq,  ///< + frequency-domain branch (no contrastive term)
  full,                ///< + contrastive term
  dual_temporal,       ///< control: frequency branch replaced by a temporal one
};

inline constexpr std::pair<Variant, std::string_view> kVariantNames[] = {
    {Variant::baseline, "baseline"},
    {Variant::attn, "attn"},
    {Variant::attn_temporal, "attn+temporal"},
    {Variant::attn_temporal_freq, "attn+temporal+freq"},
    {Variant::full, "full"},
    {Variant::dual_temporal, "dual_temporal"},
};

inline std::string_view variant_name(Variant v) {
  for (auto [k, name] : kVariantNames)
    if (k == v) return name;
  return "?";
}

inline Variant parse_variant(std::string_view name) {
  for (auto [k, n] : kVariantNames)
    if (n == name) return k;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

inline bool variant_has_encoder(Variant v) { return v != Variant::baseline; }
inline bool variant_has_blocks(Variant v) { return v != Variant::baseline && v != Variant::attn; }
inline bool variant_uses_contrastive(Variant v) {
  return v == Variant::full || v == Variant::dual_temporal;
}

inline BranchLayout variant_layout(Variant v) {
  switch (v) {
    case Variant::attn_temporal: return BranchLayout::temporal_only;
    case Variant::dual_temporal: return BranchLayout::dual_temporal;
    default: return BranchLayout::bi_domain;
  }
}

struct ModelConfig {
  std::size_t input_dim = 1024;  ///< D_in, embedding width
  std::size_t heads = 8;
  std::size_t model_dim = 64;    ///< D
  std::size_t n_blocks = 1;
  std::size_t classes = 4;       ///< K
  std::size_t mlp_hidden = 64;
  TfBlockConfig block;           ///< model_dim and layout are overwritten from the fields above
  Variant variant = Variant::full;

  /// Block config with the model-level width and the variant's layout applied.
  TfBlockConfig resolved_block() const {
    TfBlockConfig b = block;
    b.model_dim = model_dim;
    b.layout = variant_layout(variant);
    return b;
  }

  std::size_t pooled_dim() const { return variant_has_encoder(variant) ? model_dim : input_dim; }

  void validate() const {
    if (input_dim == 0 || model_dim == 0 || mlp_hidden == 0) {
      throw ConfigError("model: widths must be >= 1");
    }
    if (heads == 0 || model_dim % heads != 0) {
      throw ConfigError("model: model_dim " + std::to_string(model_dim) +
                        " not divisible by heads " + std::to_string(heads));
    }
    if (classes < 2) throw ConfigError("model: classes must be >= 2");
    if (n_blocks < 1) throw ConfigError("model: n_blocks must be >= 1");
    if (pooled_dim() < 2) throw ConfigError("model: pooled width must be >= 2");
    resolved_block().validate();
  }
};

template <class T>
struct EncoderWeights {
  T in_weight, in_bias;  // D_in x D, D
  T norm_gain, norm_shift;
  T wq, bq, wk, bk, wv, bv, wo, bo;
};

template <class T>
struct ClassifierWeights {
  T w1, b1, w2, b2;  // Dp x H, H, H x K, K
};

template <class T>
struct ModelWeights {
  EncoderWeights<T> encoder;
  std::vector<TfBlockWeights<T>> blocks;
  ClassifierWeights<T> classifier;
  T prototypes;  // K x Dp, the contrastive class targets
};

/// Calls f(hierarchical_name, tensor) for every learnable tensor, in a fixed
/// order shared by init, binding, the optimizer, and checkpoints.
template <class W, class F>
void visit_model(W& w, const ModelConfig& cfg, F&& f) {
  if (variant_has_encoder(cfg.variant)) {
    auto& e = w.encoder;
    f("encoder.in.weight", e.in_weight);
    f("encoder.in.bias", e.in_bias);
    f("encoder.norm.gain", e.norm_gain);
    f("encoder.norm.shift", e.norm_shift);
    f("encoder.attn.wq", e.wq);
    f("encoder.attn.bq", e.bq);
    f("encoder.attn.wk", e.wk);
    f("encoder.attn.bk", e.bk);
    f("encoder.attn.wv", e.wv);
    f("encoder.attn.bv", e.bv);
    f("encoder.attn.wo", e.wo);
    f("encoder.attn.bo", e.bo);
  }
  if (variant_has_blocks(cfg.variant)) {
    const TfBlockConfig bcfg = cfg.resolved_block();
    for (std::size_t i = 0; i < w.blocks.size(); ++i) {
      const std::string prefix = "blocks." + std::to_string(i) + ".";
      visit_block(w.blocks[i], bcfg,
                  [&](const std::string& name, auto& t) { f(prefix + name, t); });
    }
  }
  f("classifier.w1", w.classifier.w1);
  f("classifier.b1", w.classifier.b1);
  f("classifier.w2", w.classifier.w2);
  f("classifier.b2", w.classifier.b2);
  f("prototypes", w.prototypes);
}

inline std::size_t block_count(const ModelConfig& cfg) {
  return variant_has_blocks(cfg.variant) ? cfg.n_blocks : 0;
}

inline std::size_t encoder_param_count(const ModelConfig& cfg) {
  const std::size_t din = cfg.input_dim, d = cfg.model_dim;
  return din * d + d + 2 * d + 4 * (d * d + d);
}

inline std::size_t classifier_param_count(std::size_t in, std::size_t hidden, std::size_t k) {
  return in * hidden + hidden + hidden * k + k;
}

/// Closed-form count of learnable scalars (including the prototype bank).
inline std::size_t param_count(const ModelConfig& cfg) {
  cfg.validate();
  std::size_t n = 0;
  if (variant_has_encoder(cfg.variant)) n += encoder_param_count(cfg);
  n += block_count(cfg) * block_param_count(cfg.resolved_block());
  n += classifier_param_count(cfg.pooled_dim(), cfg.mlp_hidden, cfg.classes);
  n += cfg.classes * cfg.pooled_dim();
  return n;
}

inline ModelWeights<Tensor> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelWeights<Tensor> w;
  const std::size_t din = cfg.input_dim, d = cfg.model_dim, dp = cfg.pooled_dim();
  if (variant_has_encoder(cfg.variant)) {
    auto& e = w.encoder;
    e.in_weight = uniform_init({din, d}, din, rng);
    e.in_bias = uniform_init({d}, din, rng);
    e.norm_gain = Tensor({d}, 1.0);
    e.norm_shift = Tensor({d}, 0.0);
    for (auto [wt, bs] : {std::pair{&e.wq, &e.bq}, std::pair{&e.wk, &e.bk},
                          std::pair{&e.wv, &e.bv}, std::pair{&e.wo, &e.bo}}) {
      *wt = uniform_init({d, d}, d, rng);
      *bs = uniform_init({d}, d, rng);
    }
  }
  const TfBlockConfig bcfg = cfg.resolved_block();
  for (std::size_t i = 0; i < block_count(cfg); ++i) w.blocks.push_back(init_block(bcfg, rng));
  w.classifier.w1 = uniform_init({dp, cfg.mlp_hidden}, dp, rng);
  w.classifier.b1 = uniform_init({cfg.mlp_hidden}, dp, rng);
  w.classifier.w2 = uniform_init({cfg.mlp_hidden, cfg.classes}, cfg.mlp_hidden, rng);
  w.classifier.b2 = uniform_init({cfg.classes}, cfg.mlp_hidden, rng);
  w.prototypes = uniform_init({cfg.classes, dp}, dp, rng);
  return w;
}

/// Number of scalars held by an actual weight set.
inline std::size_t enumerate_params(const ModelWeights<Tensor>& w, const ModelConfig& cfg) {
  std::size_t n = 0;
  visit_model(w, cfg, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

inline ModelWeights<Var> bind_model(Tape& tape, const ModelWeights<Tensor>& w,
                                    const ModelConfig& cfg, bool requires_grad) {
  ModelWeights<Var> out;
  out.blocks.resize(w.blocks.size());
  std::vector<const Tensor*> src;
  visit_model(w, cfg, [&](const std::string&, const Tensor& t) { src.push_back(&t); });
  std::size_t i = 0;
  visit_model(out, cfg, [&](const std::string&, Var& v) {
    v = tape.leaf(*src[i++], requires_grad);
  });
  return out;
}

/// Input projection, then one pre-norm multi-head self-attention layer with
/// a residual connection.
inline Var attention_encoder(const Var& x, const EncoderWeights<Var>& w, const ModelConfig& cfg,
                             double norm_eps = 1e-5) {
  if (x.value().rank() != 2 || x.value().cols() != cfg.input_dim) {
    throw ShapeMismatch("attention_encoder: input " + shape_str(x.shape()) + " vs D_in=" +
                        std::to_string(cfg.input_dim));
  }
  if (x.value().rows() == 0) throw std::invalid_argument("attention_encoder: empty sequence");
  if (cfg.model_dim % cfg.heads != 0) throw ConfigError("model_dim not divisible by heads");
  const Var h = ad::linear(x, w.in_weight, w.in_bias);
  const Var u = ad::layer_norm(h, w.norm_gain, w.norm_shift, norm_eps);
  const Var q = ad::linear(u, w.wq, w.bq);
  const Var k = ad::linear(u, w.wk, w.bk);
  const Var v = ad::linear(u, w.wv, w.bv);
  const std::size_t hd = cfg.model_dim / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  for (std::size_t i = 0; i < cfg.heads; ++i) {
    const Var qh = ad::slice_cols(q, i * hd, (i + 1) * hd);
    const Var kh = ad::slice_cols(k, i * hd, (i + 1) * hd);
    const Var vh = ad::slice_cols(v, i * hd, (i + 1) * hd);
    const Var att = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), scale));
    heads.push_back(ad::matmul(att, vh));
  }
  const Var mixed = heads.size() == 1 ? heads[0] : ad::concat_cols(heads);
  return ad::add(h, ad::linear(mixed, w.wo, w.bo));
}

inline Var pool_mean(const Var& m) { return ad::mean_rows(m); }

/// Two affine layers with SiLU between; returns 1 x K logits.
inline Var classifier_forward(const Var& pooled, const ClassifierWeights<Var>& w) {
  const Var hidden = ad::silu(ad::linear(pooled, w.w1, w.b1));
  return ad::linear(hidden, w.w2, w.b2);
}

struct ForwardVars {
  Var logits;  // 1 x K
  Var pooled;  // 1 x Dp
};

inline ForwardVars model_forward(const Var& input, const ModelWeights<Var>& w,
                                 const ModelConfig& cfg, TfBlockTrace* trace = nullptr) {
  Var m = input;
  if (variant_has_encoder(cfg.variant)) m = attention_encoder(input, w.encoder, cfg);
  const TfBlockConfig bcfg = cfg.resolved_block();
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    m = tf_block_forward(m, w.blocks[i], bcfg, i == 0 ? trace : nullptr);
  }
  if (!variant_has_encoder(cfg.variant) && m.value().cols() != cfg.input_dim) {
    throw ShapeMismatch("model_forward: input width");
  }
  const Var pooled = pool_mean(m);
  return {classifier_forward(pooled, w.classifier), pooled};
}

struct ForwardResult {
  Tensor logits;  // K
  Tensor pooled;  // Dp
};

inline ForwardResult model_forward(const Tensor& input, const ModelWeights<Tensor>& w,
                                   const ModelConfig& cfg, TfBlockTrace* trace = nullptr) {
  Tape tape(false);
  const auto vars = bind_model(tape, w, cfg, false);
  const auto out = model_forward(tape.constant(input), vars, cfg, trace);
  return {out.logits.value().reshaped({cfg.classes}),
          out.pooled.value().reshaped({cfg.pooled_dim()})};
}

inline std::vector<double> softmax(std::span<const double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
  for (double& v : p) v /= z;
  return p;
}

/// Index of the largest logit; ties go to the lowest class id.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace tfmamba
