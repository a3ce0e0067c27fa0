// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jorge/errors.hpp"
#include "jorge/op_counters.hpp"

namespace jorge {

// Row-major dense matrix of doubles. The single value carrier for parameters,
// gradients and preconditioner factors. A default-constructed matrix is empty
// (0x0) and stands for "state not allocated"; every sized matrix has positive
// dimensions.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    if (rows == 0 || cols == 0) throw ShapeError("DenseMatrix: dimensions must be positive");
  }

  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) throw ShapeError("DenseMatrix: dimensions must be positive");
    if (data_.size() != rows * cols)
      throw ShapeError("DenseMatrix: data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    for (double v : data_)
      if (!std::isfinite(v)) throw NumericError("DenseMatrix: non-finite entry on construction");
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const DenseMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Product with a fixed accumulation order (ascending k per output entry), so
// results are bit-reproducible for a given build.
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  ++op_counters().matmul;
  DenseMatrix c(a.rows(), b.cols());
  const std::size_t m = a.rows(), p = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < n; ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

inline DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ShapeError("sub: shape mismatch");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline DenseMatrix scale(const DenseMatrix& a, double c) {
  DenseMatrix r = a;
  for (double& v : r.data()) v *= c;
  return r;
}

/// a + c*b, elementwise.
inline DenseMatrix add_scaled(const DenseMatrix& a, double c, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ShapeError("add_scaled: shape mismatch");
  DenseMatrix r = a;
  for (std::size_t i = 0; i < r.data().size(); ++i) r.data()[i] += c * b.data()[i];
  return r;
}

inline double frobenius_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

inline double dot(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ShapeError("dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

inline bool all_finite(const DenseMatrix& a) {
  for (double v : a.data())
    if (!std::isfinite(v)) return false;
  return true;
}

/// (M + M^T)/2. Exact symmetry: entry (i,j) and (j,i) are computed from the
/// same two operands in the same order.
inline DenseMatrix symmetrize(const DenseMatrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("symmetrize: matrix not square");
  DenseMatrix s(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      s(i, j) = v;
      s(j, i) = v;
    }
  return s;
}

/// Cholesky probe: true iff the matrix is symmetric positive definite. Cheap
/// (one n^3/3 factorization), no eigendecomposition, no inverse.
inline bool is_positive_definite(const DenseMatrix& a) {
  if (a.rows() != a.cols()) return false;
  const std::size_t n = a.rows();
  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return true;
}

// Flattens an N-d tensor shape to the 2-D matrix the optimizers work on:
// (shape[0], product of the rest). 1-d shapes become a single row. Element
// order is preserved (row-major).
inline DenseMatrix collapse_to_matrix(const std::vector<std::size_t>& shape,
                                      std::vector<double> data) {
  if (shape.empty()) throw ShapeError("collapse_to_matrix: empty shape");
  std::size_t total = 1;
  for (std::size_t s : shape) total *= s;
  if (total != data.size())
    throw ShapeError("collapse_to_matrix: shape product " + std::to_string(total) +
                     " does not match data length " + std::to_string(data.size()));
  if (shape.size() == 1) return DenseMatrix(1, shape[0], std::move(data));
  return DenseMatrix(shape[0], total / shape[0], std::move(data));
}

}  // namespace jorge
