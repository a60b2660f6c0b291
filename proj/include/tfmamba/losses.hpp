// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tfmamba/autodiff.hpp"
#include "tfmamba/fft.hpp"
#include "tfmamba/tensor.hpp"

namespace tfmamba {

struct LossConfig {
  double tau = 0.1;
  double lambda = 0.1;

  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("loss: tau must be positive");
    if (!(lambda >= 0.0)) throw ConfigError("loss: lambda must be nonnegative");
  }
};

/// One learnable prototype row per class.
struct PrototypeBank {
  Tensor P;  // K x D
};

/// Re(U . conj(V)) / (|U| |V|).
inline double vec_sim(std::span<const Complex> u, std::span<const Complex> v) {
  if (u.size() != v.size()) throw ShapeMismatch("vec_sim: length mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    dot += (u[k] * std::conj(v[k])).real();
    nu += std::norm(u[k]);
    nv += std::norm(v[k]);
  }
  if (!(nu > 0.0) || !(nv > 0.0)) throw std::invalid_argument("vec_sim: zero-magnitude argument");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

inline ComplexTensor to_complex_domain(const Tensor& v) {
  if (v.size() < 2) throw std::invalid_argument("to_complex_domain: need at least 2 entries");
  return fft_real_1d(v.reshaped({v.size()}));
}

inline double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                " out of range");
  }
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  double s = 0.0;
  for (double z : logits) s += std::exp(z - mx);
  return mx + std::log(s) - logits[label];
}

inline double ser_loss(double ce, double cmdt, const LossConfig& cfg) { return ce + cfg.lambda * cmdt; }

/// Contrastive term on the tape: anchors are FFTs of the pooled rows
/// (N x D), targets are FFTs of the prototype rows (K x D).
inline Var cmdt_loss(const Var& pooled, std::span<const std::size_t> labels, const Var& prototypes,
                     const LossConfig& cfg) {
  if (labels.empty()) throw std::invalid_argument("cmdt_loss: empty batch");
  if (pooled.value().rows() != labels.size()) throw ShapeMismatch("cmdt_loss: labels vs batch");
  if (pooled.value().cols() != prototypes.value().cols()) {
    throw ShapeMismatch("cmdt_loss: pooled width differs from prototype width");
  }
  const Var anchors = ad::rfft_cols(ad::transpose(pooled));
  const Var targets = ad::rfft_cols(ad::transpose(prototypes));
  return ad::info_nce(ad::complex_cosine(anchors, targets), labels, cfg.tau);
}

inline double cmdt_loss(const Tensor& pooled, std::span<const std::size_t> labels,
                        const PrototypeBank& bank, const LossConfig& cfg) {
  cfg.validate();
  Tape tape(false);
  return cmdt_loss(tape.constant(pooled), labels, tape.constant(bank.P), cfg).value()[0];
}

}  // namespace tfmamba
