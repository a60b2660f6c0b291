// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tfmamba/errors.hpp"

namespace tfmamba {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array. Scalar type is a template parameter so the same
/// container houses real (double) and complex data.
template <class Scalar>
class BasicTensor {
 public:
  using value_type = Scalar;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Scalar fill = Scalar{})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  BasicTensor(Shape shape, std::vector<Scalar> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeMismatch("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_str(shape_));
    }
  }

  static BasicTensor vector(std::initializer_list<Scalar> values) {
    return BasicTensor({values.size()}, std::vector<Scalar>(values));
  }

  static BasicTensor matrix(std::size_t rows, std::size_t cols,
                            std::initializer_list<Scalar> values) {
    return BasicTensor({rows, cols}, std::vector<Scalar>(values));
  }

  static BasicTensor scalar(Scalar v) { return BasicTensor({1}, {v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.size() > 1 ? shape_[1] : 1; }

  std::span<Scalar> data() noexcept { return data_; }
  std::span<const Scalar> data() const noexcept { return data_; }
  std::vector<Scalar>& storage() noexcept { return data_; }
  const std::vector<Scalar>& storage() const noexcept { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  const Scalar& operator[](std::size_t i) const { return data_[i]; }

  Scalar& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const Scalar& operator()(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  std::span<Scalar> row(std::size_t r) {
    return std::span<Scalar>(data_).subspan(r * cols(), cols());
  }
  std::span<const Scalar> row(std::size_t r) const {
    return std::span<const Scalar>(data_).subspan(r * cols(), cols());
  }

  BasicTensor reshaped(Shape shape) const {
    return BasicTensor(std::move(shape), data_);
  }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_;
  std::vector<Scalar> data_;
};

using Tensor = BasicTensor<double>;
using Complex = std::complex<double>;
using ComplexTensor = BasicTensor<Complex>;

inline bool all_finite(const Tensor& t) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline bool all_finite(const ComplexTensor& t) {
  for (const Complex& v : t.data()) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  }
  return true;
}

inline void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeMismatch(std::string(what) + " must be a matrix, got " +
                        shape_str(t.shape()));
  }
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("max_abs_diff: " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("max_abs_diff: " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Naive (m x k)(k x n) product.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  if (a.cols() != b.rows()) {
    throw ShapeMismatch("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const double* brow = &b(p, 0);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

/// Columns [begin, end) of a matrix.
inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_cols");
  if (begin > end || end > a.cols()) throw ShapeMismatch("slice_cols: bad range");
  Tensor out({a.rows(), end - begin});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = a(i, j);
  return out;
}

inline Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != rows) throw ShapeMismatch("concat_cols: row count differs");
    total += p.cols();
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out(i, off + j) = p(i, j);
    off += p.cols();
  }
  return out;
}

}  // namespace tfmamba
