// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

// Tape-based reverse-mode differentiation over dense real tensors.
//
// A Tape owns every intermediate of one computation. Ops append a node
// holding the forward value and a closure that scatters the node's gradient
// into its inputs. Complex intermediates are carried as real tensors with a
// trailing extent of 2 (real, imaginary).

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tfmamba/fft.hpp"
#include "tfmamba/kernels.hpp"
#include "tfmamba/ssd.hpp"
#include "tfmamba/tensor.hpp"

namespace tfmamba {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the gradient flowing into the node being unwound.
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var leaf(Tensor value, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad && grad_enabled_, {}});
    return Var(this, nodes_.size() - 1);
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an op result. The closure is kept only when some input needs a
  /// gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  Var record(Tensor value, std::span<const Var> inputs, Backward backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const Var& v : inputs) {
        check_owner(v);
        needs = needs || nodes_[v.id()].requires_grad;
      }
    }
    nodes_.push_back(Node{std::move(value), Tensor{}, needs,
                          needs ? std::move(backward) : Backward{}});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(const Var& v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }

  /// Gradient accumulator of `v`, zero-initialized on first use; nullptr when
  /// `v` does not participate in differentiation.
  Tensor* grad_buffer(const Var& v) {
    Node& n = nodes_.at(v.id());
    if (!n.requires_grad) return nullptr;
    if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
    return &n.grad;
  }

  /// Accumulated gradient; zeros if nothing flowed into `v`.
  Tensor grad(const Var& v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.shape() == n.value.shape()) return n.grad;
    return Tensor(n.value.shape());
  }

  void backward(const Var& loss) {
    check_owner(loss);
    Node& root = nodes_.at(loss.id());
    if (root.value.size() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  shape_str(root.value.shape()));
    }
    if (!root.requires_grad) return;
    for (auto& n : nodes_) {
      if (!n.grad.empty()) n.grad.fill(0.0);
    }
    grad_buffer(loss)->data()[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.shape() != n.value.shape()) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  void check_owner(const Var& v) const {
    if (v.tape() != this) throw std::invalid_argument("Var belongs to a different tape");
  }

  // deque keeps references to values stable while the tape grows.
  std::deque<Node> nodes_;
  bool grad_enabled_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }
inline bool Var::requires_grad() const { return tape_->requires_grad(*this); }

namespace ad {

namespace detail {

inline void add_into(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

inline void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
}

/// Elementwise unary op given f and f'.
template <class F, class DF>
Var unary(const Var& x, F f, DF df) {
  Tape& tape = *x.tape();
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return tape.record(std::move(out), {x}, [x, df](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    if (!gx) return;
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < xv.size(); ++i) (*gx)[i] += g[i] * df(xv[i]);
  });
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  detail::same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    detail::add_into(t.grad_buffer(a), g);
    detail::add_into(t.grad_buffer(b), g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    detail::add_into(t.grad_buffer(a), g);
    if (Tensor* gb = t.grad_buffer(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
    }
    if (Tensor* gb = t.grad_buffer(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return a.tape()->record(std::move(out), {a}, [a, s](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * s;
    }
  });
}

/// Sum of equally shaped values.
inline Var add_n(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("add_n: no inputs");
  Tensor out = xs[0].value();
  for (std::size_t k = 1; k < xs.size(); ++k) {
    detail::same_shape(xs[0], xs[k], "add_n");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += xs[k].value()[i];
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return xs[0].tape()->record(std::move(out), xs, [inputs](Tape& t, const Tensor& g) {
    for (const Var& x : inputs) detail::add_into(t.grad_buffer(x), g);
  });
}

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape()->record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_buffer(x)) {
      for (double& v : gx->data()) v += g[0];
    }
  });
}

/// Row vector `bias` (length n) added to every row of an m x n matrix.
inline Var add_bias(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  require_matrix(xv, "add_bias input");
  if (bias.value().size() != xv.cols()) throw ShapeMismatch("add_bias: bias width");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias.value()[j];
  return x.tape()->record(std::move(out), {x, bias}, [x, bias](Tape& t, const Tensor& g) {
    detail::add_into(t.grad_buffer(x), g);
    if (Tensor* gb = t.grad_buffer(bias)) {
      const std::size_t n = gb->size();
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % n] += g[i];
    }
  });
}

inline Var matmul(const Var& a, const Var& b) {
  Tensor out = tfmamba::matmul(a.value(), b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a)) {
      detail::add_into(ga, tfmamba::matmul(g, tfmamba::transpose(b.value())));
    }
    if (Tensor* gb = t.grad_buffer(b)) {
      detail::add_into(gb, tfmamba::matmul(tfmamba::transpose(a.value()), g));
    }
  });
}

/// x W + b for a row-batch x.
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_bias(matmul(x, weight), bias);
}

inline Var transpose(const Var& a) {
  return a.tape()->record(tfmamba::transpose(a.value()), {a}, [a](Tape& t, const Tensor& g) {
    detail::add_into(t.grad_buffer(a), tfmamba::transpose(g));
  });
}

inline Var sigmoid(const Var& x) {
  return detail::unary(x, [](double v) { return tfmamba::sigmoid(v); },
                       [](double v) {
                         const double s = tfmamba::sigmoid(v);
                         return s * (1.0 - s);
                       });
}

inline Var silu(const Var& x) {
  return detail::unary(x, [](double v) { return tfmamba::silu(v); },
                       [](double v) { return silu_grad(v); });
}

inline Var softplus(const Var& x) {
  return detail::unary(x, [](double v) { return tfmamba::softplus(v); },
                       [](double v) { return tfmamba::sigmoid(v); });
}

inline Var exp(const Var& x) {
  return detail::unary(x, [](double v) { return std::exp(v); },
                       [](double v) { return std::exp(v); });
}

/// exp(-softplus(x)), a smooth map of the real line onto (0, 1).
inline Var decay_from_raw(const Var& x) {
  return detail::unary(x, [](double v) { return std::exp(-tfmamba::softplus(v)); },
                       [](double v) {
                         return -tfmamba::sigmoid(v) * std::exp(-tfmamba::softplus(v));
                       });
}

inline Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  return x.tape()->record(tfmamba::slice_cols(x.value(), begin, end), {x},
                          [x, begin](Tape& t, const Tensor& g) {
                            Tensor* gx = t.grad_buffer(x);
                            if (!gx) return;
                            for (std::size_t i = 0; i < g.rows(); ++i)
                              for (std::size_t j = 0; j < g.cols(); ++j)
                                (*gx)(i, begin + j) += g(i, j);
                          });
}

inline Var concat_cols(std::span<const Var> parts) {
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const Var& p : parts) values.push_back(p.value());
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape()->record(
      tfmamba::concat_cols(values), parts, [inputs](Tape& t, const Tensor& g) {
        std::size_t off = 0;
        for (const Var& p : inputs) {
          const std::size_t w = p.value().cols();
          if (Tensor* gp = t.grad_buffer(p)) {
            for (std::size_t i = 0; i < g.rows(); ++i)
              for (std::size_t j = 0; j < w; ++j) (*gp)(i, j) += g(i, off + j);
          }
          off += w;
        }
      });
}

/// Stacks 1 x n (or length-n) rows into an N x n matrix.
inline Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
  const std::size_t n = rows[0].value().size();
  Tensor out({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].value().size() != n) throw ShapeMismatch("stack_rows: widths differ");
    for (std::size_t j = 0; j < n; ++j) out(i, j) = rows[i].value()[j];
  }
  std::vector<Var> inputs(rows.begin(), rows.end());
  return rows[0].tape()->record(std::move(out), rows, [inputs, n](Tape& t, const Tensor& g) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (Tensor* gi = t.grad_buffer(inputs[i])) {
        for (std::size_t j = 0; j < n; ++j) (*gi)[j] += g(i, j);
      }
    }
  });
}

/// Column means of an L x D matrix, as a 1 x D row.
inline Var mean_rows(const Var& x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "mean_rows");
  if (xv.rows() == 0) throw std::invalid_argument("mean_rows: zero rows");
  Tensor out({1, xv.cols()});
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < xv.cols(); ++j) out[j] += xv(i, j);
  const double inv = 1.0 / static_cast<double>(xv.rows());
  for (double& v : out.data()) v *= inv;
  return x.tape()->record(std::move(out), {x}, [x, inv](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    if (!gx) return;
    for (std::size_t i = 0; i < gx->rows(); ++i)
      for (std::size_t j = 0; j < gx->cols(); ++j) (*gx)(i, j) += g[j] * inv;
  });
}

inline Var softmax_rows(const Var& x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "softmax_rows");
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double mx = xv(i, 0);
    for (std::size_t j = 1; j < xv.cols(); ++j) mx = std::max(mx, xv(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < xv.cols(); ++j) z += out(i, j) = std::exp(xv(i, j) - mx);
    for (std::size_t j = 0; j < xv.cols(); ++j) out(i, j) /= z;
  }
  Tensor probs = out;
  return x.tape()->record(std::move(out), {x}, [x, probs](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    if (!gx) return;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < probs.cols(); ++j) dot += g(i, j) * probs(i, j);
      for (std::size_t j = 0; j < probs.cols(); ++j)
        (*gx)(i, j) += probs(i, j) * (g(i, j) - dot);
    }
  });
}

inline Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps) {
  const Tensor& xv = x.value();
  Tensor out = tfmamba::layer_norm(xv, gain.value(), shift.value(), eps);
  return x.tape()->record(
      std::move(out), {x, gain, shift}, [x, gain, shift, eps](Tape& t, const Tensor& g) {
        const Tensor& xv = x.value();
        const Tensor& gm = gain.value();
        const std::size_t rows = xv.rows(), d = xv.cols();
        Tensor* gx = t.grad_buffer(x);
        Tensor* gg = t.grad_buffer(gain);
        Tensor* gs = t.grad_buffer(shift);
        std::vector<double> xhat(d), dxhat(d);
        for (std::size_t i = 0; i < rows; ++i) {
          double mean = 0.0;
          for (std::size_t j = 0; j < d; ++j) mean += xv(i, j);
          mean /= static_cast<double>(d);
          double var = 0.0;
          for (std::size_t j = 0; j < d; ++j) var += (xv(i, j) - mean) * (xv(i, j) - mean);
          var /= static_cast<double>(d);
          const double inv = 1.0 / std::sqrt(var + eps);
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            xhat[j] = (xv(i, j) - mean) * inv;
            dxhat[j] = g(i, j) * gm[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xhat[j];
            if (gg) (*gg)[j] += g(i, j) * xhat[j];
            if (gs) (*gs)[j] += g(i, j);
          }
          if (!gx) continue;
          m1 /= static_cast<double>(d);
          m2 /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) (*gx)(i, j) += inv * (dxhat[j] - m1 - xhat[j] * m2);
        }
      });
}

inline Var depthwise_conv1d(const Var& x, const Var& kernel, const Var& bias) {
  Tensor out = tfmamba::depthwise_conv1d(x.value(), kernel.value(), bias.value());
  return x.tape()->record(
      std::move(out), {x, kernel, bias}, [x, kernel, bias](Tape& t, const Tensor& g) {
        const Tensor& xv = x.value();
        const Tensor& kv = kernel.value();
        const std::size_t len = xv.rows(), ch = xv.cols(), k = kv.rows();
        Tensor* gx = t.grad_buffer(x);
        Tensor* gk = t.grad_buffer(kernel);
        Tensor* gb = t.grad_buffer(bias);
        for (std::size_t tt = 0; tt < len; ++tt) {
          if (gb) {
            for (std::size_t c = 0; c < ch; ++c) (*gb)[c] += g(tt, c);
          }
          for (std::size_t j = 0; j < k; ++j) {
            if (tt + j < k - 1) continue;
            const std::size_t src = tt + j - (k - 1);
            for (std::size_t c = 0; c < ch; ++c) {
              if (gx) (*gx)(src, c) += kv(j, c) * g(tt, c);
              if (gk) (*gk)(j, c) += xv(src, c) * g(tt, c);
            }
          }
        }
      });
}

/// Column-wise real FFT: L x C -> L' x C x 2.
inline Var rfft_cols(const Var& x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "rfft_cols");
  const std::size_t len = xv.rows(), ch = xv.cols(), bins = rfft_bins(len);
  const ComplexTensor s = tfmamba::rfft_cols(xv);
  Tensor out({bins, ch, 2});
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[2 * i] = s[i].real();
    out[2 * i + 1] = s[i].imag();
  }
  return x.tape()->record(std::move(out), {x}, [x, len, ch, bins](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_buffer(x);
    if (!gx) return;
    // Adjoint of the half-spectrum DFT: dx_n = Re(sum_k g_k e^{+2 pi i k n / L}).
    std::vector<Complex> z(len);
    for (std::size_t c = 0; c < ch; ++c) {
      std::fill(z.begin(), z.end(), Complex{});
      for (std::size_t k = 0; k < bins; ++k) {
        z[k] = Complex(g[(k * ch + c) * 2], g[(k * ch + c) * 2 + 1]);
      }
      fft_complex_inplace(z, +1);
      for (std::size_t n = 0; n < len; ++n) (*gx)(n, c) += z[n].real();
    }
  });
}

/// Column-wise inverse real FFT: L' x C x 2 -> L x C.
inline Var irfft_cols(const Var& spec, std::size_t length) {
  const Tensor& sv = spec.value();
  if (sv.rank() != 3 || sv.dim(2) != 2 || sv.dim(0) != rfft_bins(length)) {
    throw ShapeMismatch("irfft_cols: spectrum " + shape_str(sv.shape()) +
                        " incompatible with length " + std::to_string(length));
  }
  const std::size_t bins = sv.dim(0), ch = sv.dim(1);
  ComplexTensor s({bins, ch});
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = Complex(sv[2 * i], sv[2 * i + 1]);
  return spec.tape()->record(
      tfmamba::irfft_cols(s, length), {spec}, [spec, length, bins, ch](Tape& t, const Tensor& g) {
        Tensor* gs = t.grad_buffer(spec);
        if (!gs) return;
        const ComplexTensor r = tfmamba::rfft_cols(g);
        const double inv = 1.0 / static_cast<double>(length);
        for (std::size_t k = 0; k < bins; ++k) {
          const bool single = (k == 0) || (2 * k == length);
          const double w = (single ? 1.0 : 2.0) * inv;
          for (std::size_t c = 0; c < ch; ++c) {
            (*gs)[(k * ch + c) * 2] += w * r(k, c).real();
            (*gs)[(k * ch + c) * 2 + 1] += w * r(k, c).imag();
          }
        }
      });
}

enum class GateMode { soft, hard };

struct GateOptions {
  double slope = 1.0;
  GateMode mode = GateMode::soft;
  /// Divide each column's power by its mean over bins before thresholding.
  bool normalize = false;
};

inline constexpr double kPowerNormEps = 1e-12;

/// Spectral gate on an L' x C x 2 spectrum with a scalar threshold `omega`:
/// hard: bin kept iff power > omega; soft: bin scaled by
/// sigmoid((power - omega) / slope).
inline Var spectral_gate(const Var& theta, const Var& omega, GateOptions opt) {
  const Tensor& sv = theta.value();
  if (sv.rank() != 3 || sv.dim(2) != 2) throw ShapeMismatch("spectral_gate: spectrum shape");
  if (omega.value().size() != 1) throw ShapeMismatch("spectral_gate: omega must be scalar");
  if (!(opt.slope > 0.0)) throw std::invalid_argument("spectral_gate: slope must be positive");
  const std::size_t bins = sv.dim(0), ch = sv.dim(1);
  const double w = omega.value()[0];
  Tensor power({bins, ch});
  for (std::size_t i = 0; i < bins * ch; ++i) power[i] = sv[2 * i] * sv[2 * i] + sv[2 * i + 1] * sv[2 * i + 1];
  std::vector<double> denom(ch, 1.0);
  if (opt.normalize) {
    for (std::size_t c = 0; c < ch; ++c) {
      double m = 0.0;
      for (std::size_t k = 0; k < bins; ++k) m += power(k, c);
      denom[c] = m / static_cast<double>(bins) + kPowerNormEps;
    }
  }
  Tensor gate({bins, ch});
  Tensor out(sv.shape());
  for (std::size_t k = 0; k < bins; ++k) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double q = power(k, c) / denom[c];
      const double gv = opt.mode == GateMode::hard ? (q > w ? 1.0 : 0.0)
                                                   : tfmamba::sigmoid((q - w) / opt.slope);
      gate(k, c) = gv;
      const std::size_t i = k * ch + c;
      out[2 * i] = sv[2 * i] * gv;
      out[2 * i + 1] = sv[2 * i + 1] * gv;
    }
  }
  return theta.tape()->record(
      std::move(out), {theta, omega},
      [theta, omega, opt, power, denom, gate, bins, ch](Tape& t, const Tensor& g) {
        const Tensor& sv = theta.value();
        Tensor* gth = t.grad_buffer(theta);
        Tensor* gom = t.grad_buffer(omega);
        if (opt.mode == GateMode::hard) {
          if (gth) {
            for (std::size_t i = 0; i < bins * ch; ++i) {
              (*gth)[2 * i] += g[2 * i] * gate[i];
              (*gth)[2 * i + 1] += g[2 * i + 1] * gate[i];
            }
          }
          return;
        }
        std::vector<double> dq(bins * ch);
        double domega = 0.0;
        for (std::size_t i = 0; i < bins * ch; ++i) {
          const double dgate = g[2 * i] * sv[2 * i] + g[2 * i + 1] * sv[2 * i + 1];
          const double dz = dgate * gate[i] * (1.0 - gate[i]) / opt.slope;
          dq[i] = dz;
          domega -= dz;
        }
        if (gom) (*gom)[0] += domega;
        if (!gth) return;
        for (std::size_t c = 0; c < ch; ++c) {
          double dmean = 0.0;
          if (opt.normalize) {
            for (std::size_t k = 0; k < bins; ++k) {
              dmean -= dq[k * ch + c] * power(k, c) / (denom[c] * denom[c]);
            }
            dmean /= static_cast<double>(bins);
          }
          for (std::size_t k = 0; k < bins; ++k) {
            const std::size_t i = k * ch + c;
            const double dp = dq[i] / denom[c] + dmean;
            (*gth)[2 * i] += g[2 * i] * gate[i] + 2.0 * sv[2 * i] * dp;
            (*gth)[2 * i + 1] += g[2 * i + 1] * gate[i] + 2.0 * sv[2 * i + 1] * dp;
          }
        }
      });
}

/// State space scan; forward by the chunked dual, backward by the adjoint
/// recurrence.
inline Var ssd(const Var& x, const Var& a, const Var& b, const Var& c, std::size_t groups,
               std::size_t chunk) {
  SsdInputs in{x.value(), a.value(), b.value(), c.value(), groups};
  Tensor y = ssd_chunked(in, SsdConfig{chunk});
  return x.tape()->record(std::move(y), {x, a, b, c}, [x, a, b, c, groups](Tape& t, const Tensor& g) {
    const SsdInputs in{x.value(), a.value(), b.value(), c.value(), groups};
    const SsdGradients grads = ssd_backward(in, g);
    detail::add_into(t.grad_buffer(x), grads.dX);
    detail::add_into(t.grad_buffer(a), grads.dA);
    detail::add_into(t.grad_buffer(b), grads.dB);
    detail::add_into(t.grad_buffer(c), grads.dC);
  });
}

/// -log softmax(logits)[label] for a length-K logit row.
inline Var cross_entropy(const Var& logits, std::size_t label) {
  const Tensor& z = logits.value();
  const std::size_t k = z.size();
  if (label >= k) {
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(k) + " classes");
  }
  double mx = z[0];
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, z[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += std::exp(z[i] - mx);
  const double lse = mx + std::log(s);
  return logits.tape()->record(
      Tensor::scalar(lse - z[label]), {logits}, [logits, label, lse](Tape& t, const Tensor& g) {
        Tensor* gz = t.grad_buffer(logits);
        if (!gz) return;
        const Tensor& z = logits.value();
        for (std::size_t i = 0; i < z.size(); ++i) {
          (*gz)[i] += g[0] * (std::exp(z[i] - lse) - (i == label ? 1.0 : 0.0));
        }
      });
}

/// Pairwise complex cosine similarity between the columns of two spectra
/// (n x N x 2 and n x M x 2): S[i,j] = Re(u_i . conj(v_j)) / (|u_i| |v_j|).
inline Var complex_cosine(const Var& u, const Var& v) {
  const Tensor& uv = u.value();
  const Tensor& vv = v.value();
  if (uv.rank() != 3 || vv.rank() != 3 || uv.dim(2) != 2 || vv.dim(2) != 2 ||
      uv.dim(0) != vv.dim(0)) {
    throw ShapeMismatch("complex_cosine: " + shape_str(uv.shape()) + " vs " +
                        shape_str(vv.shape()));
  }
  const std::size_t n = uv.dim(0), nu = uv.dim(1), nv = vv.dim(1);
  auto norms = [n](const Tensor& s, std::size_t cols) {
    std::vector<double> out(cols, 0.0);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = (k * cols + c) * 2;
        out[c] += s[i] * s[i] + s[i + 1] * s[i + 1];
      }
    for (double& x : out) {
      if (!(x > 0.0)) throw std::invalid_argument("complex_cosine: zero-magnitude vector");
      x = std::sqrt(x);
    }
    return out;
  };
  const std::vector<double> mu = norms(uv, nu), mv = norms(vv, nv);
  Tensor dots({nu, nv});
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < nu; ++i) {
      const double ur = uv[(k * nu + i) * 2], ui = uv[(k * nu + i) * 2 + 1];
      for (std::size_t j = 0; j < nv; ++j) {
        dots(i, j) += ur * vv[(k * nv + j) * 2] + ui * vv[(k * nv + j) * 2 + 1];
      }
    }
  Tensor sim({nu, nv});
  for (std::size_t i = 0; i < nu; ++i)
    for (std::size_t j = 0; j < nv; ++j) sim(i, j) = dots(i, j) / (mu[i] * mv[j]);
  Tensor sv = sim;
  return u.tape()->record(
      std::move(sim), {u, v}, [u, v, mu, mv, sv, n, nu, nv](Tape& t, const Tensor& g) {
        const Tensor& uv = u.value();
        const Tensor& vv = v.value();
        Tensor* gu = t.grad_buffer(u);
        Tensor* gv = t.grad_buffer(v);
        for (std::size_t i = 0; i < nu; ++i)
          for (std::size_t j = 0; j < nv; ++j) {
            const double gij = g(i, j);
            if (gij == 0.0) continue;
            const double inv = 1.0 / (mu[i] * mv[j]);
            const double s = sv(i, j);
            for (std::size_t k = 0; k < n; ++k)
              for (std::size_t p = 0; p < 2; ++p) {
                const double a = uv[(k * nu + i) * 2 + p];
                const double b = vv[(k * nv + j) * 2 + p];
                if (gu) (*gu)[(k * nu + i) * 2 + p] += gij * (b * inv - s * a / (mu[i] * mu[i]));
                if (gv) (*gv)[(k * nv + j) * 2 + p] += gij * (a * inv - s * b / (mv[j] * mv[j]));
              }
          }
      });
}

/// InfoNCE over a similarity table S (N x K, anchor i vs class k):
/// mean_i [ log sum_j exp(S[i, l_j]/tau) - S[i, l_i]/tau ].
inline Var info_nce(const Var& scores, std::span<const std::size_t> labels, double tau) {
  const Tensor& s = scores.value();
  require_matrix(s, "info_nce scores");
  const std::size_t n = labels.size();
  if (s.rows() != n) throw ShapeMismatch("info_nce: one score row per label required");
  if (!(tau > 0.0)) throw std::invalid_argument("info_nce: tau must be positive");
  for (std::size_t l : labels) {
    if (l >= s.cols()) throw std::invalid_argument("info_nce: label out of range");
  }
  Tensor probs({n, n});  // softmax over the batch targets for each anchor
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = s(i, labels[0]) / tau;
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, s(i, labels[j]) / tau);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += probs(i, j) = std::exp(s(i, labels[j]) / tau - mx);
    for (std::size_t j = 0; j < n; ++j) probs(i, j) /= z;
    loss += mx + std::log(z) - s(i, labels[i]) / tau;
  }
  loss /= static_cast<double>(n);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return scores.tape()->record(
      Tensor::scalar(loss), {scores}, [scores, lab, probs, tau](Tape& t, const Tensor& g) {
        Tensor* gs = t.grad_buffer(scores);
        if (!gs) return;
        const std::size_t n = lab.size();
        const double c = g[0] / (static_cast<double>(n) * tau);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) (*gs)(i, lab[j]) += c * probs(i, j);
          (*gs)(i, lab[i]) -= c;
        }
      });
}

}  // namespace ad

/// Builds a scalar loss on `tape` from leaves bound to `params`.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// Exact reverse-mode gradient of the built loss with respect to each param.
inline std::vector<Tensor> gradient(const LossBuilder& build, std::span<const Tensor> params) {
  Tape tape(true);
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p, true));
  const Var loss = build(tape, leaves);
  if (loss.value().size() != 1) {
    throw std::invalid_argument("gradient: loss must be scalar");
  }
  tape.backward(loss);
  std::vector<Tensor> out;
  out.reserve(leaves.size());
  for (const Var& v : leaves) out.push_back(tape.grad(v));
  return out;
}

inline double evaluate_loss(const LossBuilder& build, std::span<const Tensor> params) {
  Tape tape(false);
  std::vector<Var> leaves;
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p, false));
  return build(tape, leaves).value()[0];
}

struct FiniteDiffReport {
  std::vector<Tensor> analytic;
  std::vector<Tensor> numeric;
  std::vector<Tensor> rel_error;
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_entry = 0;
};

/// Central differences (f(p+h) - f(p-h)) / 2h per parameter entry, compared
/// to the reverse-mode gradient as |a - n| / max(|a|, |n|, abs_floor).
inline FiniteDiffReport finite_diff_check(const LossBuilder& build, std::vector<Tensor> params,
                                          double h, double abs_floor = 1e-6) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  FiniteDiffReport rep;
  rep.analytic = gradient(build, params);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor num(params[p].shape());
    Tensor rel(params[p].shape());
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + h;
      const double fp = evaluate_loss(build, params);
      params[p][i] = saved - h;
      const double fm = evaluate_loss(build, params);
      params[p][i] = saved;
      num[i] = (fp - fm) / (2.0 * h);
      const double a = rep.analytic[p][i];
      rel[i] = std::abs(a - num[i]) / std::max({std::abs(a), std::abs(num[i]), abs_floor});
      if (rel[i] > rep.max_rel_error) {
        rep.max_rel_error = rel[i];
        rep.worst_param = p;
        rep.worst_entry = i;
      }
    }
    rep.numeric.push_back(std::move(num));
    rep.rel_error.push_back(std::move(rel));
  }
  return rep;
}

}  // namespace tfmamba
