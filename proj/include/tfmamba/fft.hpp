// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "tfmamba/tensor.hpp"

namespace tfmamba {

namespace detail {

inline bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// In-place iterative radix-2 transform; sign = -1 forward, +1 unnormalized
/// inverse. Length must be a power of two.
inline void fft_radix2(std::vector<Complex>& a, int sign) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    // Twiddles evaluated directly rather than by repeated multiplication so
    // the error does not grow with len.
    std::vector<Complex> w(half);
    for (std::size_t k = 0; k < half; ++k) {
      w[k] = Complex(std::cos(ang * static_cast<double>(k)),
                     std::sin(ang * static_cast<double>(k)));
    }
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * w[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

/// exp(sign * i*pi*k^2/n) with k^2 reduced mod 2n to keep the argument small.
inline Complex chirp(std::size_t k, std::size_t n, int sign) {
  const std::size_t kk = (k * k) % (2 * n);
  const double ang = sign * std::numbers::pi * static_cast<double>(kk) / static_cast<double>(n);
  return {std::cos(ang), std::sin(ang)};
}

/// Arbitrary-length DFT through Bluestein's chirp-z identity.
inline void fft_bluestein(std::vector<Complex>& a, int sign) {
  const std::size_t n = a.size();
  const std::size_t m = next_pow2(2 * n - 1);
  std::vector<Complex> u(m), v(m);
  for (std::size_t k = 0; k < n; ++k) u[k] = a[k] * chirp(k, n, sign);
  v[0] = chirp(0, n, -sign);
  for (std::size_t k = 1; k < n; ++k) v[k] = v[m - k] = chirp(k, n, -sign);
  fft_radix2(u, -1);
  fft_radix2(v, -1);
  for (std::size_t i = 0; i < m; ++i) u[i] *= v[i];
  fft_radix2(u, +1);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = u[k] * inv_m * chirp(k, n, sign);
}

}  // namespace detail

/// Full complex DFT, unnormalized in both directions.
inline void fft_complex_inplace(std::vector<Complex>& a, int sign = -1) {
  if (a.size() <= 1) return;
  if (detail::is_pow2(a.size())) {
    detail::fft_radix2(a, sign);
  } else {
    detail::fft_bluestein(a, sign);
  }
}

inline std::size_t rfft_bins(std::size_t length) { return length / 2 + 1; }

/// Nonnegative-frequency half of the DFT of a real signal:
/// S[k] = sum_n x[n] exp(-2 pi i k n / L), k = 0 .. floor(L/2).
inline std::vector<Complex> rfft(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("rfft: empty input");
  std::vector<Complex> a(x.begin(), x.end());
  fft_complex_inplace(a, -1);
  a.resize(rfft_bins(x.size()));
  return a;
}

/// Inverse of rfft. Imaginary parts of the DC bin (and of the Nyquist bin when
/// L is even) are discarded, so any half-spectrum maps to a real signal.
inline std::vector<double> irfft(std::span<const Complex> s, std::size_t length) {
  if (length == 0 || s.size() != rfft_bins(length)) {
    throw std::invalid_argument("irfft: " + std::to_string(s.size()) +
                                " bins do not match length " + std::to_string(length));
  }
  std::vector<Complex> full(length);
  full[0] = Complex(s[0].real(), 0.0);
  for (std::size_t k = 1; k < s.size(); ++k) {
    if (2 * k == length) {
      full[k] = Complex(s[k].real(), 0.0);
    } else {
      full[k] = s[k];
      full[length - k] = std::conj(s[k]);
    }
  }
  fft_complex_inplace(full, +1);
  std::vector<double> out(length);
  const double inv = 1.0 / static_cast<double>(length);
  for (std::size_t n = 0; n < length; ++n) out[n] = full[n].real() * inv;
  return out;
}

/// 1-D real FFT of a length-L tensor; returns floor(L/2)+1 bins.
inline ComplexTensor fft_real_1d(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("fft_real_1d: empty input");
  auto bins = rfft(x.data());
  const std::size_t n = bins.size();
  return ComplexTensor({n}, std::move(bins));
}

inline Tensor ifft_real_1d(const ComplexTensor& s, std::size_t original_length) {
  auto x = irfft(s.data(), original_length);
  return Tensor({original_length}, std::move(x));
}

/// Direct O(L^2) evaluation of the DFT definition. Test oracle only.
inline ComplexTensor dft_oracle(const Tensor& x) {
  const std::size_t len = x.size();
  if (len == 0) throw std::invalid_argument("dft_oracle: empty input");
  const std::size_t bins = rfft_bins(len);
  ComplexTensor out({bins});
  for (std::size_t k = 0; k < bins; ++k) {
    Complex acc{};
    for (std::size_t n = 0; n < len; ++n) {
      // Reduce k*n mod L before scaling so the angle stays in [0, 2pi).
      const double ang = -2.0 * std::numbers::pi *
                         static_cast<double>((k * n) % len) / static_cast<double>(len);
      acc += x[n] * Complex(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline Tensor power_spectrum(const ComplexTensor& s) {
  Tensor out(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = std::norm(s[i]);
  return out;
}

/// Column-wise rfft of an L x C matrix, producing L' x C bins.
inline ComplexTensor rfft_cols(const Tensor& x) {
  require_matrix(x, "rfft_cols");
  const std::size_t len = x.rows(), ch = x.cols(), bins = rfft_bins(len);
  ComplexTensor out({bins, ch});
  std::vector<double> col(len);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t t = 0; t < len; ++t) col[t] = x(t, c);
    const auto s = rfft(col);
    for (std::size_t k = 0; k < bins; ++k) out(k, c) = s[k];
  }
  return out;
}

inline Tensor irfft_cols(const ComplexTensor& s, std::size_t length) {
  if (s.rank() != 2) throw ShapeMismatch("irfft_cols: spectrum must be a matrix");
  const std::size_t bins = s.rows(), ch = s.cols();
  Tensor out({length, ch});
  std::vector<Complex> col(bins);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t k = 0; k < bins; ++k) col[k] = s(k, c);
    const auto x = irfft(col, length);
    for (std::size_t t = 0; t < length; ++t) out(t, c) = x[t];
  }
  return out;
}

}  // namespace tfmamba
