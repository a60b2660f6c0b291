// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

// Scalar-decay state space scan
//
//   h_t = a_t h_{t-1} + B_t x_t,   y_t = C_t^T h_t,   h_{-1} = 0
//
// evaluated per channel, with B and C shared by all channels of a group.
// Three evaluation orders are provided and must agree:
//   * ssd_sequential        - the recurrence, O(L d) per channel
//   * ssd_dual_materialized - y = M x with the lower-triangular
//                             semiseparable matrix M[t,s] = C_t.B_s prod a
//   * ssd_chunked           - dual form inside blocks, recurrence across
//
// Layout: X, A are L x D'; B, C are L x (G d), group-major. Channel c belongs
// to group c / (D'/G).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tfmamba/tensor.hpp"

namespace tfmamba {

struct SsdInputs {
  Tensor X;
  Tensor A;
  Tensor B;
  Tensor C;
  std::size_t groups = 1;

  std::size_t length() const { return X.rows(); }
  std::size_t channels() const { return X.cols(); }
  std::size_t state_dim() const { return B.cols() / groups; }
  std::size_t channels_per_group() const { return channels() / groups; }
};

struct SsdConfig {
  std::size_t chunk = 64;
};

/// Max sequence length for which the L x L dual matrix is materialized.
inline constexpr std::size_t kMaxMaterializedLength = 4096;

inline void validate_ssd_inputs(const SsdInputs& in) {
  require_matrix(in.X, "SSD X");
  require_matrix(in.A, "SSD A");
  require_matrix(in.B, "SSD B");
  require_matrix(in.C, "SSD C");
  const std::size_t len = in.X.rows();
  if (in.A.rows() != len || in.B.rows() != len || in.C.rows() != len) {
    throw ShapeMismatch("SSD: X, A, B, C must share the sequence length");
  }
  if (in.A.cols() != in.X.cols()) throw ShapeMismatch("SSD: A must match X width");
  if (in.B.cols() != in.C.cols()) throw ShapeMismatch("SSD: B and C widths differ");
  if (in.groups == 0 || in.X.cols() % in.groups != 0) {
    throw ShapeMismatch("SSD: channel count " + std::to_string(in.X.cols()) +
                        " not divisible by groups " + std::to_string(in.groups));
  }
  if (in.B.cols() == 0 || in.B.cols() % in.groups != 0) {
    throw ShapeMismatch("SSD: B width must be a positive multiple of groups");
  }
  if (!all_finite(in.X) || !all_finite(in.B) || !all_finite(in.C)) throw NumericError("ssd input X/B/C");
  for (double a : in.A.data()) {
    if (std::isnan(a)) throw NumericError("ssd decay A");
    if (!(a > 0.0 && a <= 1.0)) {
      throw std::invalid_argument("SSD: decay " + std::to_string(a) + " outside (0, 1]");
    }
  }
}

inline Tensor ssd_sequential(const SsdInputs& in) {
  validate_ssd_inputs(in);
  const std::size_t len = in.length(), ch = in.channels(), d = in.state_dim();
  const std::size_t per = in.channels_per_group();
  Tensor y({len, ch});
  std::vector<double> h(ch * d, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t g = c / per;
      const double a = in.A(t, c), x = in.X(t, c);
      const double* b = &in.B(t, g * d);
      const double* cc = &in.C(t, g * d);
      double* hc = &h[c * d];
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        hc[i] = a * hc[i] + b[i] * x;
        acc += cc[i] * hc[i];
      }
      y(t, c) = acc;
    }
  }
  return y;
}

namespace detail {

/// CB[t][s] = C_t . B_s for rows [t0, t1) and columns [s0, t] of one group.
inline void group_scores(const SsdInputs& in, std::size_t g, std::size_t t0, std::size_t t1,
                         std::size_t s0, std::vector<double>& out) {
  const std::size_t d = in.state_dim();
  const std::size_t n = t1 - t0, w = t1 - s0;
  out.assign(n * w, 0.0);
  for (std::size_t t = t0; t < t1; ++t) {
    const double* cc = &in.C(t, g * d);
    for (std::size_t s = s0; s <= t; ++s) {
      const double* b = &in.B(s, g * d);
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += cc[i] * b[i];
      out[(t - t0) * w + (s - s0)] = acc;
    }
  }
}

}  // namespace detail

inline Tensor ssd_dual_materialized(const SsdInputs& in) {
  validate_ssd_inputs(in);
  const std::size_t len = in.length(), ch = in.channels();
  if (len > kMaxMaterializedLength) {
    throw ResourceLimit("ssd_dual_materialized: L=" + std::to_string(len) +
                        " exceeds guard " + std::to_string(kMaxMaterializedLength));
  }
  const std::size_t per = in.channels_per_group();
  Tensor y({len, ch});
  std::vector<double> scores;
  std::vector<double> mask(len * len);
  for (std::size_t g = 0; g < in.groups; ++g) {
    detail::group_scores(in, g, 0, len, 0, scores);
    for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
      std::fill(mask.begin(), mask.end(), 0.0);
      for (std::size_t t = 0; t < len; ++t) {
        double decay = 1.0;  // prod_{r=s+1}^{t} a_r
        for (std::size_t s = t + 1; s-- > 0;) {
          mask[t * len + s] = scores[t * len + s] * decay;
          decay *= in.A(s, c);
        }
      }
      for (std::size_t t = 0; t < len; ++t) {
        double acc = 0.0;
        for (std::size_t s = 0; s <= t; ++s) acc += mask[t * len + s] * in.X(s, c);
        y(t, c) = acc;
      }
    }
  }
  return y;
}

inline Tensor ssd_chunked(const SsdInputs& in, const SsdConfig& cfg) {
  validate_ssd_inputs(in);
  if (cfg.chunk == 0) throw ConfigError("ssd_chunked: chunk must be >= 1");
  const std::size_t len = in.length(), ch = in.channels(), d = in.state_dim();
  const std::size_t per = in.channels_per_group();
  Tensor y({len, ch});
  std::vector<double> h(ch * d, 0.0);
  std::vector<double> scores;
  for (std::size_t s0 = 0; s0 < len; s0 += cfg.chunk) {
    const std::size_t s1 = std::min(len, s0 + cfg.chunk), n = s1 - s0;
    for (std::size_t g = 0; g < in.groups; ++g) {
      detail::group_scores(in, g, s0, s1, s0, scores);
      for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
        double* hc = &h[c * d];
        double carry = 1.0;  // prod_{r=s0}^{t} a_r
        for (std::size_t t = s0; t < s1; ++t) {
          carry *= in.A(t, c);
          double acc = 0.0;
          double decay = 1.0;
          for (std::size_t s = t + 1; s-- > s0;) {
            acc += scores[(t - s0) * n + (s - s0)] * decay * in.X(s, c);
            decay *= in.A(s, c);
          }
          const double* cc = &in.C(t, g * d);
          double from_state = 0.0;
          for (std::size_t i = 0; i < d; ++i) from_state += cc[i] * hc[i];
          y(t, c) = acc + carry * from_state;
        }
        // State handed to the next block.
        for (std::size_t i = 0; i < d; ++i) hc[i] *= carry;
        double decay = 1.0;
        for (std::size_t s = s1; s-- > s0;) {
          const double wx = decay * in.X(s, c);
          const double* b = &in.B(s, g * d);
          for (std::size_t i = 0; i < d; ++i) hc[i] += wx * b[i];
          decay *= in.A(s, c);
        }
      }
    }
  }
  return y;
}

struct SsdGradients {
  Tensor dX, dA, dB, dC;
};

/// Reverse-mode adjoint of the scan: given dL/dy, returns dL/d{X,A,B,C}.
/// Runs the recurrence forward to record states, then the adjoint
/// recurrence dh_t = C_t dy_t + a_{t+1} dh_{t+1} backward.
inline SsdGradients ssd_backward(const SsdInputs& in, const Tensor& dy) {
  validate_ssd_inputs(in);
  const std::size_t len = in.length(), ch = in.channels(), d = in.state_dim();
  const std::size_t per = in.channels_per_group();
  if (dy.shape() != in.X.shape()) throw ShapeMismatch("ssd_backward: dy shape");
  std::vector<double> states(len * ch * d);
  {
    std::vector<double> h(ch * d, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t g = c / per;
        const double a = in.A(t, c), x = in.X(t, c);
        const double* b = &in.B(t, g * d);
        double* hc = &h[c * d];
        for (std::size_t i = 0; i < d; ++i) hc[i] = a * hc[i] + b[i] * x;
      }
      std::copy(h.begin(), h.end(), states.begin() + static_cast<std::ptrdiff_t>(t * ch * d));
    }
  }
  SsdGradients out{Tensor(in.X.shape()), Tensor(in.A.shape()), Tensor(in.B.shape()),
                   Tensor(in.C.shape())};
  std::vector<double> adj(ch * d, 0.0);
  for (std::size_t t = len; t-- > 0;) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t g = c / per;
      double* gc = &adj[c * d];
      if (t + 1 < len) {
        const double a_next = in.A(t + 1, c);
        for (std::size_t i = 0; i < d; ++i) gc[i] *= a_next;
      }
      const double gy = dy(t, c);
      const double* cc = &in.C(t, g * d);
      const double* b = &in.B(t, g * d);
      const double* ht = &states[(t * ch + c) * d];
      const double* hp = t > 0 ? &states[((t - 1) * ch + c) * d] : nullptr;
      const double x = in.X(t, c);
      double* dc = &out.dC(t, g * d);
      double* db = &out.dB(t, g * d);
      double dx = 0.0, da = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        dc[i] += gy * ht[i];
        gc[i] += cc[i] * gy;
        dx += b[i] * gc[i];
        db[i] += x * gc[i];
        if (hp) da += gc[i] * hp[i];
      }
      out.dX(t, c) = dx;
      out.dA(t, c) = da;
    }
  }
  return out;
}

}  // namespace tfmamba
