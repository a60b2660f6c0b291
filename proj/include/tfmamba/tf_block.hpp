// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

// Temporal-Frequency Mamba block.
//
//   u   = LayerNorm(x)
//   Pt  = u Wt,  Pf = u Wf                         (L x (2D' + 2Gd) each)
//   Yt  = SSD(split(silu(conv(Pt))))               temporal branch
//   Yf  = SSD(split(irfft(gate(rfft(Pf[:, X|B|C])))), decay from Pf[:, A])
//   out = x + [Yt | Yf] Wo + bo
//
// Column order of a projection is [X | B | C | A_raw] with widths
// [D', Gd, Gd, D']; decays are a = exp(-softplus(A_raw)).

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tfmamba/autodiff.hpp"
#include "tfmamba/fft.hpp"
#include "tfmamba/kernels.hpp"
#include "tfmamba/rng.hpp"
#include "tfmamba/tensor.hpp"

namespace tfmamba {

using ad::GateMode;

enum class BranchLayout {
  temporal_only,  ///< one temporal branch
  bi_domain,      ///< temporal + frequency (the full block)
  dual_temporal,  ///< two independent temporal branches (control)
};

struct TfBlockConfig {
  std::size_t model_dim = 64;   ///< D
  std::size_t expand_dim = 64;  ///< D'
  std::size_t state_dim = 16;   ///< d
  std::size_t groups = 1;       ///< G
  std::size_t conv_width = 4;   ///< k
  std::size_t chunk = 64;
  GateMode gate_mode = GateMode::soft;
  double gate_slope = 1.0;
  double norm_eps = 1e-5;
  BranchLayout layout = BranchLayout::bi_domain;

  std::size_t group_width() const { return groups * state_dim; }
  std::size_t proj_width() const { return 2 * expand_dim + 2 * group_width(); }
  std::size_t branch_count() const { return layout == BranchLayout::temporal_only ? 1 : 2; }

  void validate() const {
    if (model_dim == 0 || expand_dim == 0 || state_dim == 0 || groups == 0 || conv_width == 0) {
      throw ConfigError("block: all extents must be >= 1");
    }
    if (expand_dim % groups != 0) {
      throw ConfigError("block: expand_dim " + std::to_string(expand_dim) +
                        " not divisible by groups " + std::to_string(groups));
    }
    if (chunk == 0) throw ConfigError("block: chunk must be >= 1");
    if (!(gate_slope > 0.0)) throw ConfigError("block: gate_slope must be positive");
    if (!(norm_eps > 0.0)) throw ConfigError("block: norm_eps must be positive");
  }
};

template <class T>
struct TfBlockWeights {
  T norm_gain, norm_shift;    // D
  T w_temporal;               // D x P
  T conv_kernel, conv_bias;   // k x P, P
  T w_second;                 // D x P (frequency or second temporal branch)
  T rho_omega;                // 1, bi_domain only
  T conv2_kernel, conv2_bias; // dual_temporal only
  T w_out, b_out;             // (branches * D') x D, D
};

/// Calls f(name, member) for every tensor present under `cfg.layout`.
template <class W, class F>
void visit_block(W& w, const TfBlockConfig& cfg, F&& f) {
  f("norm.gain", w.norm_gain);
  f("norm.shift", w.norm_shift);
  f("temporal.proj", w.w_temporal);
  f("temporal.conv.kernel", w.conv_kernel);
  f("temporal.conv.bias", w.conv_bias);
  if (cfg.layout == BranchLayout::bi_domain) {
    f("frequency.proj", w.w_second);
    f("frequency.rho_omega", w.rho_omega);
  } else if (cfg.layout == BranchLayout::dual_temporal) {
    f("temporal2.proj", w.w_second);
    f("temporal2.conv.kernel", w.conv2_kernel);
    f("temporal2.conv.bias", w.conv2_bias);
  }
  f("out.weight", w.w_out);
  f("out.bias", w.b_out);
}

inline Shape block_param_shape(const std::string& name, const TfBlockConfig& cfg) {
  const std::size_t d = cfg.model_dim, p = cfg.proj_width(), k = cfg.conv_width;
  if (name == "norm.gain" || name == "norm.shift" || name == "out.bias") return {d};
  if (name.ends_with(".proj")) return {d, p};
  if (name.ends_with("conv.kernel")) return {k, p};
  if (name.ends_with("conv.bias")) return {p};
  if (name == "frequency.rho_omega") return {1};
  if (name == "out.weight") return {cfg.branch_count() * cfg.expand_dim, d};
  throw std::invalid_argument("unknown block parameter " + name);
}

inline std::size_t block_param_count(const TfBlockConfig& cfg) {
  const std::size_t d = cfg.model_dim, p = cfg.proj_width(), k = cfg.conv_width;
  const std::size_t branch = d * p + k * p + p;  // projection + conv
  std::size_t n = 2 * d + branch + cfg.branch_count() * cfg.expand_dim * d + d;
  if (cfg.layout == BranchLayout::bi_domain) n += d * p + 1;
  if (cfg.layout == BranchLayout::dual_temporal) n += branch;
  return n;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) fill.
inline Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

/// Initial threshold on mean-normalized power.
inline constexpr double kInitialOmega = 0.5;

inline TfBlockWeights<Tensor> init_block(const TfBlockConfig& cfg, Rng& rng) {
  cfg.validate();
  TfBlockWeights<Tensor> w;
  visit_block(w, cfg, [&](const std::string& name, Tensor& t) {
    const Shape shape = block_param_shape(name, cfg);
    if (name == "norm.gain") {
      t = Tensor(shape, 1.0);
    } else if (name == "norm.shift") {
      t = Tensor(shape, 0.0);
    } else if (name == "frequency.rho_omega") {
      t = Tensor(shape, softplus_inverse(kInitialOmega));
    } else if (name.ends_with("conv.kernel") || name.ends_with("conv.bias")) {
      t = uniform_init(shape, cfg.conv_width, rng);
    } else if (name.starts_with("out.")) {
      t = uniform_init(shape, cfg.branch_count() * cfg.expand_dim, rng);
    } else {
      t = uniform_init(shape, cfg.model_dim, rng);
    }
  });
  return w;
}

/// Intermediates recorded for inspection.
struct TfBlockTrace {
  Tensor temporal_in;       ///< Phi_T, L x P
  Tensor temporal_out;      ///< Y_T, L x D'
  Tensor spectrum_before;   ///< power of rfft(Phi_F0), L' x (D' + 2Gd)
  Tensor spectrum_after;    ///< power after the gate
};

/// Layer norm followed by both input projections.
inline std::pair<Var, Var> project_inputs(const Var& x, const TfBlockWeights<Var>& w,
                                          const TfBlockConfig& cfg) {
  if (x.value().rank() != 2 || x.value().cols() != cfg.model_dim) {
    throw ShapeMismatch("project_inputs: input " + shape_str(x.shape()) + " vs D=" +
                        std::to_string(cfg.model_dim));
  }
  const Var u = ad::layer_norm(x, w.norm_gain, w.norm_shift, cfg.norm_eps);
  const Var pt = ad::matmul(u, w.w_temporal);
  const Var pf = cfg.branch_count() > 1 ? ad::matmul(u, w.w_second) : Var{};
  return {pt, pf};
}

/// Runs the scan on a [X | B | C] block plus raw decay logits.
inline Var ssd_from_split(const Var& xbc, const Var& a_raw, const TfBlockConfig& cfg) {
  const std::size_t dp = cfg.expand_dim, gd = cfg.group_width();
  const Var x = ad::slice_cols(xbc, 0, dp);
  const Var b = ad::slice_cols(xbc, dp, dp + gd);
  const Var c = ad::slice_cols(xbc, dp + gd, dp + 2 * gd);
  const Var a = ad::decay_from_raw(a_raw);
  return ad::ssd(x, a, b, c, cfg.groups, cfg.chunk);
}

/// conv -> SiLU -> split -> SSD, applied to all projection channels.
inline Var temporal_branch(const Var& phi, const Var& kernel, const Var& bias,
                           const TfBlockConfig& cfg) {
  const std::size_t p = cfg.proj_width(), dp = cfg.expand_dim;
  if (phi.value().cols() != p) throw ShapeMismatch("temporal_branch: projection width");
  const Var act = ad::silu(ad::depthwise_conv1d(phi, kernel, bias));
  return ssd_from_split(ad::slice_cols(act, 0, p - dp), ad::slice_cols(act, p - dp, p), cfg);
}

inline Tensor spectrum_power(const Tensor& spec) {
  Tensor out({spec.dim(0), spec.dim(1)});
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = spec[2 * i] * spec[2 * i] + spec[2 * i + 1] * spec[2 * i + 1];
  }
  return out;
}

/// FFT along time -> power gate -> inverse FFT on [X | B | C]; the decay
/// columns bypass the transform.
inline Var frequency_branch(const Var& phi, const Var& omega, const TfBlockConfig& cfg,
                            TfBlockTrace* trace = nullptr) {
  const std::size_t p = cfg.proj_width(), dp = cfg.expand_dim;
  if (phi.value().cols() != p) throw ShapeMismatch("frequency_branch: projection width");
  const std::size_t len = phi.value().rows();
  const Var xbc = ad::slice_cols(phi, 0, p - dp);
  const Var a_raw = ad::slice_cols(phi, p - dp, p);
  const Var spec = ad::rfft_cols(xbc);
  const Var gated = ad::spectral_gate(spec, omega, {cfg.gate_slope, cfg.gate_mode, true});
  if (trace) {
    trace->spectrum_before = spectrum_power(spec.value());
    trace->spectrum_after = spectrum_power(gated.value());
  }
  return ssd_from_split(ad::irfft_cols(gated, len), a_raw, cfg);
}

inline Var tf_block_forward(const Var& x, const TfBlockWeights<Var>& w, const TfBlockConfig& cfg,
                            TfBlockTrace* trace = nullptr) {
  auto [pt, pf] = project_inputs(x, w, cfg);
  std::vector<Var> outs;
  outs.push_back(temporal_branch(pt, w.conv_kernel, w.conv_bias, cfg));
  if (trace) {
    trace->temporal_in = pt.value();
    trace->temporal_out = outs.back().value();
  }
  if (cfg.layout == BranchLayout::bi_domain) {
    outs.push_back(frequency_branch(pf, ad::softplus(w.rho_omega), cfg, trace));
  } else if (cfg.layout == BranchLayout::dual_temporal) {
    outs.push_back(temporal_branch(pf, w.conv2_kernel, w.conv2_bias, cfg));
  }
  const Var fused = outs.size() == 1 ? outs[0] : ad::concat_cols(outs);
  return ad::add(x, ad::linear(fused, w.w_out, w.b_out));
}

/// Places every tensor of `w` on `tape` as a leaf.
inline TfBlockWeights<Var> bind_block(Tape& tape, const TfBlockWeights<Tensor>& w,
                                      const TfBlockConfig& cfg, bool requires_grad) {
  TfBlockWeights<Var> out;
  std::vector<const Tensor*> src;
  visit_block(w, cfg, [&](const std::string&, const Tensor& t) { src.push_back(&t); });
  std::size_t i = 0;
  visit_block(out, cfg, [&](const std::string&, Var& v) {
    v = tape.leaf(*src[i++], requires_grad);
  });
  return out;
}

/// Inference convenience: runs the block on a throwaway tape.
inline Tensor tf_block_forward(const Tensor& x, const TfBlockWeights<Tensor>& w,
                               const TfBlockConfig& cfg, TfBlockTrace* trace = nullptr) {
  cfg.validate();
  Tape tape(false);
  const auto vars = bind_block(tape, w, cfg, false);
  return tf_block_forward(tape.constant(x), vars, cfg, trace).value();
}

/// Gate on a raw (un-normalized) complex spectrum.
inline ComplexTensor spectral_gate(const ComplexTensor& theta, double omega, double slope,
                                   GateMode mode) {
  if (!(slope > 0.0)) throw std::invalid_argument("spectral_gate: slope must be positive");
  if (omega < 0.0) throw std::invalid_argument("spectral_gate: omega must be >= 0");
  ComplexTensor out(theta.shape());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double p = std::norm(theta[i]);
    const double g = mode == GateMode::hard ? (p > omega ? 1.0 : 0.0) : sigmoid((p - omega) / slope);
    out[i] = theta[i] * g;
  }
  return out;
}

}  // namespace tfmamba
