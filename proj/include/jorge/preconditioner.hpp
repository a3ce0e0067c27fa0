// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "jorge/errors.hpp"
#include "jorge/matrix.hpp"

namespace jorge {

// How many terms of the series expansion the factor update keeps. `second`
// (through the X^2 term) is the default; `first` exists so tests can measure
// how much the quadratic term buys.
enum class ExpansionOrder : int { first = 1, second = 2 };

// Left/right factors (Lhat, Rhat) for one m-by-n parameter matrix. Both are
// kept symmetric and track the inverse fourth roots of the usual EMA
// curvature accumulators L = b2*L + (1-b2)*G*G^T and R = b2*R + (1-b2)*G^T*G,
// without any eigendecomposition or inverse along the way.
struct PreconditionerPair {
  DenseMatrix left;   // m x m
  DenseMatrix right;  // n x n
  long last_update_step = 0;
};

struct PrecondUpdateReport {
  double beta2_left = 0.0;
  double beta2_right = 0.0;
  double xl_norm = 0.0;
  double xr_norm = 0.0;
  bool skipped = true;
  bool reset_left = false;   // factor failed the validity probe and was re-anchored
  bool reset_right = false;
};

// Below this Frobenius mass of X the update is skipped: the rule divides by
// ||X||, and a vanishing gradient carries no usable curvature anyway.
inline constexpr double kPrecondSkipThreshold = 1e-30;

/// Fresh factors: eps^{-1/4} * I on both sides, so that the implied curvature
/// accumulators start at eps * I.
inline PreconditionerPair init_preconditioners(std::size_t m, std::size_t n, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("init_preconditioners: epsilon must be positive");
  const double v = std::pow(epsilon, -0.25);
  PreconditionerPair pair;
  pair.left = scale(DenseMatrix::identity(m), v);
  pair.right = scale(DenseMatrix::identity(n), v);
  pair.last_update_step = 0;
  return pair;
}

// Smallest smoothing coefficient that keeps the series expansion valid:
// the expansion of (I + (1-b2)/b2 * X)^{-1/4} needs ||(1-b2)/b2 * X|| < 1,
// which lower-bounds b2 by ||X||/(||X||+1). Setting b2 at equality makes the
// scaled term have unit Frobenius norm.
inline double dynamic_beta2(double x_norm) {
  if (!(x_norm > 0.0)) throw std::domain_error("dynamic_beta2: x_norm must be positive");
  return x_norm / (x_norm + 1.0);
}

struct FactorUpdate {
  DenseMatrix factor;
  double beta2 = 0.0;
  double x_norm = 0.0;
  bool skipped = false;
};

namespace detail {

// Shared body of the left/right factor updates. `fhat` is the current factor
// and `gram` is G*G^T (left) or G^T*G (right). With b2 at its dynamic value,
// the truncated-series update collapses to
//   fhat' = ((||X||+1)/||X||)^{1/4} * fhat * (I - X/(4||X||) + 5 X^2/(32||X||^2))
// with X = fhat^4 * gram and the quadratic term kept only at order two.
inline FactorUpdate factor_update(const DenseMatrix& fhat, const DenseMatrix& gram,
                                  ExpansionOrder order) {
  const std::size_t d = fhat.rows();
  const DenseMatrix f2 = matmul(fhat, fhat);
  const DenseMatrix f4 = matmul(f2, f2);
  const DenseMatrix x = matmul(f4, gram);

  const double xn = frobenius_norm(x);
  if (!std::isfinite(xn)) throw NumericError("preconditioner update: non-finite curvature term");
  if (xn <= kPrecondSkipThreshold) return {fhat, 0.0, xn, true};

  const double b2 = dynamic_beta2(xn);
  DenseMatrix series = add_scaled(DenseMatrix::identity(d), -1.0 / (4.0 * xn), x);
  if (order == ExpansionOrder::second)
    series = add_scaled(series, 5.0 / (32.0 * xn * xn), matmul(x, x));

  const double lead = std::pow((xn + 1.0) / xn, 0.25);
  DenseMatrix next = symmetrize(scale(matmul(fhat, series), lead));
  if (!all_finite(next)) throw NumericError("preconditioner update: non-finite factor");
  return {std::move(next), b2, xn, false};
}

}  // namespace detail

/// One update of the left factor from gradient G (m x n): X = Lhat^4 * G*G^T.
inline FactorUpdate update_left(const DenseMatrix& lhat, const DenseMatrix& grad,
                                ExpansionOrder order) {
  if (lhat.rows() != lhat.cols()) throw ShapeError("update_left: factor not square");
  if (lhat.rows() != grad.rows()) throw ShapeError("update_left: factor/gradient mismatch");
  return detail::factor_update(lhat, matmul(grad, transpose(grad)), order);
}

/// One update of the right factor: X = Rhat^4 * G^T*G.
inline FactorUpdate update_right(const DenseMatrix& rhat, const DenseMatrix& grad,
                                 ExpansionOrder order) {
  if (rhat.rows() != rhat.cols()) throw ShapeError("update_right: factor not square");
  if (rhat.rows() != grad.cols()) throw ShapeError("update_right: factor/gradient mismatch");
  return detail::factor_update(rhat, matmul(transpose(grad), grad), order);
}

namespace detail {

// Validity guard. The truncated update is a fixed-size multiplicative kick
// (the scaled correction always has unit Frobenius norm); on gradient streams
// that hammer one direction -- deterministic ill-conditioned objectives, not
// the stochastic regime the rule is built for -- the composed kicks can push
// a factor out of the positive-definite cone, after which it no longer
// approximates the inverse root of anything and preconditioned steps flip
// sign. A Cholesky probe (no eigendecomposition, no inverse) catches that;
// the failing factor is re-anchored to a trace-preserving multiple of the
// identity and curvature re-accumulates from there.
inline DenseMatrix guard_factor(DenseMatrix updated, const DenseMatrix& previous, bool* reset) {
  if (is_positive_definite(updated)) return updated;
  *reset = true;
  const std::size_t n = previous.rows();
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += previous(i, i);
  const double anchor = trace / static_cast<double>(n);
  return scale(DenseMatrix::identity(n), anchor > 1e-8 ? anchor : 1e-8);
}

}  // namespace detail

// Refresh policy: the pair is updated on steps 1, 1+freq, 1+2*freq, ... and
// reused unchanged in between. Steps are 1-based. The skip is atomic: if
// either side's X falls below the threshold (only possible for a vanishing
// gradient), both factors are kept.
inline std::pair<PreconditionerPair, PrecondUpdateReport> maybe_update_pair(
    const PreconditionerPair& pair, const DenseMatrix& grad, long step, long freq,
    ExpansionOrder order) {
  if (freq < 1) throw ConfigError("maybe_update_pair: freq must be >= 1");
  if (step < 1) throw ConfigError("maybe_update_pair: step must be >= 1");
  PrecondUpdateReport report;
  if ((step - 1) % freq != 0) return {pair, report};

  FactorUpdate ul = update_left(pair.left, grad, order);
  FactorUpdate ur = update_right(pair.right, grad, order);
  report.xl_norm = ul.x_norm;
  report.xr_norm = ur.x_norm;
  if (ul.skipped || ur.skipped) return {pair, report};

  report.beta2_left = ul.beta2;
  report.beta2_right = ur.beta2;
  report.skipped = false;
  PreconditionerPair next;
  next.left = detail::guard_factor(std::move(ul.factor), pair.left, &report.reset_left);
  next.right = detail::guard_factor(std::move(ur.factor), pair.right, &report.reset_right);
  next.last_update_step = step;
  return {std::move(next), report};
}

/// Preconditioned gradient Lhat * G * Rhat. Two products, nothing else: the
/// factors already are the (approximate) inverse roots.
inline DenseMatrix precondition(const PreconditionerPair& pair, const DenseMatrix& grad) {
  if (pair.left.rows() != grad.rows() || pair.right.rows() != grad.cols())
    throw ShapeError("precondition: factor/gradient mismatch");
  return matmul(matmul(pair.left, grad), pair.right);
}

}  // namespace jorge
