// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>

#include "tfmamba/tensor.hpp"

namespace tfmamba {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }

inline Tensor silu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = silu(x[i]);
  return out;
}

/// Causal depthwise convolution over the time axis.
/// out[t,c] = bias[c] + sum_j kernel[j,c] * x[t + j - (k-1), c], zero-padded.
inline Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_matrix(x, "conv input");
  require_matrix(kernel, "conv kernel");
  const std::size_t len = x.rows(), ch = x.cols(), k = kernel.rows();
  if (k == 0) throw ShapeMismatch("depthwise_conv1d: kernel width must be >= 1");
  if (kernel.cols() != ch || bias.size() != ch) {
    throw ShapeMismatch("depthwise_conv1d: kernel " + shape_str(kernel.shape()) +
                        " / bias " + shape_str(bias.shape()) + " vs input " +
                        shape_str(x.shape()));
  }
  Tensor out({len, ch});
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < ch; ++c) out(t, c) = bias[c];
    for (std::size_t j = 0; j < k; ++j) {
      // Padded index t + j maps to source t + j - (k - 1).
      if (t + j < k - 1) continue;
      const std::size_t src = t + j - (k - 1);
      for (std::size_t c = 0; c < ch; ++c) out(t, c) += kernel(j, c) * x(src, c);
    }
  }
  return out;
}

/// Row-wise standardization with population variance, then gain/shift.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  require_matrix(x, "layer_norm input");
  const std::size_t rows = x.rows(), d = x.cols();
  if (d == 0) throw ShapeMismatch("layer_norm: zero width");
  if (gain.size() != d || shift.size() != d) throw ShapeMismatch("layer_norm: gain/shift width");
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  Tensor out({rows, d});
  for (std::size_t i = 0; i < rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) out(i, j) = (x(i, j) - mean) * inv * gain[j] + shift[j];
  }
  return out;
}

}  // namespace tfmamba
