// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "jorge/errors.hpp"
#include "jorge/matrix.hpp"
#include "jorge/op_counters.hpp"

namespace jorge {

struct SymEigResult {
  std::vector<double> eigenvalues;  // ascending
  DenseMatrix eigenvectors;         // columns; orthogonal
};

namespace detail {

inline double offdiag_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace detail

// Symmetric eigendecomposition by cyclic Jacobi rotations. Good to near
// machine precision for the modest sizes used here (<= a few hundred).
// Converged when the off-diagonal Frobenius mass falls below 1e-12 * ||A||_F,
// capped at 100 sweeps.
inline SymEigResult sym_eig(const DenseMatrix& input, const std::string& label = "") {
  ++op_counters().sym_eig;
  if (input.rows() != input.cols())
    throw ShapeError("sym_eig: matrix not square" + (label.empty() ? "" : " (" + label + ")"));
  const std::size_t n = input.rows();
  const double norm = frobenius_norm(input);
  {
    double asym = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) {
        const double d = input(i, j) - input(j, i);
        asym += 2.0 * d * d;
      }
    if (norm > 0.0 && std::sqrt(asym) > 1e-9 * norm)
      throw ShapeError("sym_eig: matrix not symmetric" +
                       (label.empty() ? "" : " (" + label + ")"));
  }

  DenseMatrix a = symmetrize(input);
  DenseMatrix v = DenseMatrix::identity(n);
  const double tol = 1e-12 * norm;

  bool converged = detail::offdiag_norm(a) <= tol;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = detail::offdiag_norm(a) <= tol;
  }
  if (!converged)
    throw NumericError("sym_eig: Jacobi iteration did not converge in 100 sweeps" +
                       (label.empty() ? "" : " (" + label + ")"));

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&a](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

  SymEigResult out;
  out.eigenvalues.resize(n);
  out.eigenvectors = DenseMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = a(idx[j], idx[j]);
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = v(i, idx[j]);
  }
  return out;
}

// Exact A^{-1/p} for symmetric PSD A: eigendecompose and rebuild with the
// eigenvalues mapped through (lambda + ridge)^{-1/p}. This is the slow exact
// route that the inverse-free update is measured against, and the one the
// Shampoo reference optimizer uses.
inline DenseMatrix exact_inv_root(const DenseMatrix& a, int p, double ridge = 1e-8,
                                  const std::string& label = "") {
  if (p <= 0) throw ConfigError("exact_inv_root: p must be positive");
  if (ridge < 0.0) throw ConfigError("exact_inv_root: ridge must be non-negative");
  ++op_counters().exact_inv_root;
  const SymEigResult eig = sym_eig(a, label);
  const std::size_t n = a.rows();
  std::vector<double> mapped(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lam = eig.eigenvalues[i] + ridge;
    if (lam <= 0.0)
      throw NumericError("exact_inv_root: matrix not positive definite after ridging" +
                         (label.empty() ? "" : " (" + label + ")"));
    mapped[i] = std::pow(lam, -1.0 / static_cast<double>(p));
  }
  // Q diag(mapped) Q^T
  DenseMatrix scaled = eig.eigenvectors;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scaled(i, j) *= mapped[j];
  return symmetrize(matmul(scaled, transpose(eig.eigenvectors)));
}

}  // namespace jorge
