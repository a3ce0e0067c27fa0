// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include "jorge/errors.hpp"
#include "jorge/matrix.hpp"
#include "jorge/eig.hpp"
#include "jorge/op_counters.hpp"
#include "jorge/preconditioner.hpp"
#include "jorge/schedule.hpp"

namespace jorge {

enum class OptimizerKind { jorge, shampoo_ref, sgd, adamw };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::jorge: return "jorge";
    case OptimizerKind::shampoo_ref: return "shampoo";
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adamw: return "adamw";
  }
  return "?";
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  ScheduleSpec lr_schedule;
  double beta1 = 0.9;
  double weight_decay = 0.0;
  bool decoupled_wd = false;
  double epsilon = 1e-6;  // preconditioner init; implied accumulators start at epsilon*I
  long precond_freq = 1;
  ExpansionOrder expansion_order = ExpansionOrder::second;
  bool grafting = false;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double shampoo_beta2 = 0.9;
  double inv_root_ridge = 1e-8;

  void validate() const {
    lr_schedule.validate();
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("optimizer: beta1 must be in [0,1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
      throw ConfigError("optimizer: weight_decay must be finite and >= 0");
    if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be positive");
    if (precond_freq < 1) throw ConfigError("optimizer: precond_freq must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
      throw ConfigError("optimizer: adam betas must be in [0,1)");
    if (!(adam_eps > 0.0)) throw ConfigError("optimizer: adam_eps must be positive");
    if (!(shampoo_beta2 > 0.0 && shampoo_beta2 < 1.0))
      throw ConfigError("optimizer: shampoo_beta2 must be in (0,1)");
  }
};

// Everything an optimizer keeps per parameter matrix. Only the fields the
// configured kind needs are allocated; the rest stay empty.
struct LayerState {
  DenseMatrix params;
  DenseMatrix momentum;        // EMA of preconditioned grads (jorge/shampoo), heavy-ball (sgd)
  DenseMatrix graft_momentum;  // heavy-ball SGD momentum driving the grafted magnitude
  PreconditionerPair precond;  // jorge
  DenseMatrix shampoo_left, shampoo_right;          // curvature accumulators L, R
  DenseMatrix shampoo_inv_left, shampoo_inv_right;  // cached L^{-1/4}, R^{-1/4}
  DenseMatrix adam_first, adam_second;              // adamw moments
  long step = 0;
};

struct StepReport {
  double lr_used = 0.0;
  double update_norm = 0.0;  // ||delta theta|| of the momentum-driven move, before decay
  double graft_norm = 0.0;   // ||m_sgd|| when grafting, else 0
  std::optional<PrecondUpdateReport> precond_report;
  std::map<std::string, std::uint64_t> op_counts;
};

inline LayerState init_layer_state(DenseMatrix params, const OptimizerConfig& cfg) {
  LayerState st;
  const std::size_t m = params.rows(), n = params.cols();
  st.params = std::move(params);
  st.momentum = DenseMatrix(m, n);
  switch (cfg.kind) {
    case OptimizerKind::jorge:
      st.precond = init_preconditioners(m, n, cfg.epsilon);
      if (cfg.grafting) st.graft_momentum = DenseMatrix(m, n);
      break;
    case OptimizerKind::shampoo_ref:
      st.shampoo_left = scale(DenseMatrix::identity(m), cfg.epsilon);
      st.shampoo_right = scale(DenseMatrix::identity(n), cfg.epsilon);
      if (cfg.grafting) st.graft_momentum = DenseMatrix(m, n);
      break;
    case OptimizerKind::adamw:
      st.adam_first = DenseMatrix(m, n);
      st.adam_second = DenseMatrix(m, n);
      break;
    case OptimizerKind::sgd:
      break;
  }
  return st;
}

// Grafted move: direction from m_jorge, magnitude lr * ||m_graft||. Returns
// the updated parameters. A zero graft magnitude leaves them untouched; a
// zero direction with a non-zero magnitude has no defined step.
inline DenseMatrix graft_update(const DenseMatrix& theta, const DenseMatrix& m_jorge,
                                const DenseMatrix& m_graft, double lr) {
  const double mg = frobenius_norm(m_graft);
  if (mg == 0.0) return theta;
  const double mj = frobenius_norm(m_jorge);
  if (mj == 0.0)
    throw NumericError("graft_update: zero step direction with non-zero graft magnitude");
  return add_scaled(theta, -lr * mg / mj, m_jorge);
}

namespace detail {

inline void check_step_shapes(const LayerState& state, const DenseMatrix& grad,
                              const char* who) {
  if (!state.params.same_shape(grad))
    throw ShapeError(std::string(who) + ": gradient shape does not match parameters");
}

/// Momentum-driven parameter move shared by jorge and the Shampoo reference;
/// returns ||delta theta|| of the move (before any decoupled decay).
inline double momentum_and_move(LayerState& state, const DenseMatrix& grad,
                                const DenseMatrix& preconditioned, double lr,
                                const OptimizerConfig& cfg, StepReport& report) {
  state.momentum = add_scaled(scale(state.momentum, cfg.beta1), 1.0 - cfg.beta1, preconditioned);
  DenseMatrix before = state.params;
  if (cfg.grafting) {
    state.graft_momentum = add_scaled(scale(state.graft_momentum, cfg.beta1), 1.0, grad);
    report.graft_norm = frobenius_norm(state.graft_momentum);
    state.params = graft_update(state.params, state.momentum, state.graft_momentum, lr);
  } else {
    state.params = add_scaled(state.params, -lr, state.momentum);
  }
  return frobenius_norm(sub(state.params, before));
}

inline void apply_decoupled_decay(LayerState& state, double lr, const OptimizerConfig& cfg) {
  if (cfg.decoupled_wd && cfg.weight_decay > 0.0)
    state.params = scale(state.params, 1.0 - lr * cfg.weight_decay);
}

}  // namespace detail

// SGD with heavy-ball momentum and coupled L2:
//   m <- beta1*m + (G + wd*theta);  theta <- theta - lr*m
// The decay rides inside the momentum, which is exactly what the bootstrap
// heuristic for the decoupled decay constant compensates for.
inline StepReport sgd_step(LayerState& state, const DenseMatrix& grad, double lr,
                           const OptimizerConfig& cfg) {
  detail::check_step_shapes(state, grad, "sgd_step");
  if (lr < 0.0) throw ConfigError("sgd_step: negative learning rate");
  const OpCounters before = snapshot_op_counters();
  state.step += 1;

  DenseMatrix eff_grad =
      cfg.weight_decay > 0.0 ? add_scaled(grad, cfg.weight_decay, state.params) : grad;
  state.momentum = add_scaled(scale(state.momentum, cfg.beta1), 1.0, eff_grad);
  state.params = add_scaled(state.params, -lr, state.momentum);

  StepReport report;
  report.lr_used = lr;
  report.update_norm = lr * frobenius_norm(state.momentum);
  report.op_counts = op_counter_delta(before);
  return report;
}

// AdamW: decoupled decay on theta_{t-1}, then the bias-corrected adaptive
// update.
inline StepReport adamw_step(LayerState& state, const DenseMatrix& grad, double lr,
                             const OptimizerConfig& cfg) {
  detail::check_step_shapes(state, grad, "adamw_step");
  const OpCounters before = snapshot_op_counters();
  state.step += 1;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;

  if (cfg.weight_decay > 0.0) state.params = scale(state.params, 1.0 - lr * cfg.weight_decay);

  state.adam_first = add_scaled(scale(state.adam_first, b1), 1.0 - b1, grad);
  for (std::size_t i = 0; i < grad.data().size(); ++i) {
    const double g = grad.data()[i];
    state.adam_second.data()[i] = b2 * state.adam_second.data()[i] + (1.0 - b2) * g * g;
  }
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  DenseMatrix before_params = state.params;
  for (std::size_t i = 0; i < state.params.data().size(); ++i) {
    const double mhat = state.adam_first.data()[i] / bc1;
    const double vhat = state.adam_second.data()[i] / bc2;
    state.params.data()[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }

  StepReport report;
  report.lr_used = lr;
  report.update_norm = frobenius_norm(sub(state.params, before_params));
  report.op_counts = op_counter_delta(before);
  return report;
}

// Shampoo reference: exact inverse fourth roots via eigendecomposition. The
// curvature accumulators take every gradient; the expensive roots are
// recomputed only on refresh steps and reused in between.
inline StepReport shampoo_ref_step(LayerState& state, const DenseMatrix& grad, double lr,
                                   const OptimizerConfig& cfg) {
  detail::check_step_shapes(state, grad, "shampoo_ref_step");
  const OpCounters before = snapshot_op_counters();
  state.step += 1;

  const DenseMatrix* g = &grad;
  DenseMatrix coupled;
  if (!cfg.decoupled_wd && cfg.weight_decay > 0.0) {
    coupled = add_scaled(grad, cfg.weight_decay, state.params);
    g = &coupled;
  }

  const double b2 = cfg.shampoo_beta2;
  state.shampoo_left = add_scaled(scale(state.shampoo_left, b2), 1.0 - b2,
                                  matmul(*g, transpose(*g)));
  state.shampoo_right = add_scaled(scale(state.shampoo_right, b2), 1.0 - b2,
                                   matmul(transpose(*g), *g));

  if ((state.step - 1) % cfg.precond_freq == 0 || state.shampoo_inv_left.empty()) {
    state.shampoo_inv_left = exact_inv_root(state.shampoo_left, 4, cfg.inv_root_ridge, "L");
    state.shampoo_inv_right = exact_inv_root(state.shampoo_right, 4, cfg.inv_root_ridge, "R");
  }
  DenseMatrix preconditioned = matmul(matmul(state.shampoo_inv_left, *g), state.shampoo_inv_right);

  StepReport report;
  report.lr_used = lr;
  report.update_norm = detail::momentum_and_move(state, *g, preconditioned, lr, cfg, report);
  detail::apply_decoupled_decay(state, lr, cfg);
  report.op_counts = op_counter_delta(before);
  return report;
}

// The inverse-free step: refresh the factor pair (respecting the update
// frequency), precondition with two products, then the usual momentum move,
// grafted when configured. Decoupled decay lands after the move.
inline StepReport jorge_step(LayerState& state, const DenseMatrix& grad, double lr,
                             const OptimizerConfig& cfg) {
  detail::check_step_shapes(state, grad, "jorge_step");
  const OpCounters before = snapshot_op_counters();
  state.step += 1;

  const DenseMatrix* g = &grad;
  DenseMatrix coupled;
  if (!cfg.decoupled_wd && cfg.weight_decay > 0.0) {
    coupled = add_scaled(grad, cfg.weight_decay, state.params);
    g = &coupled;
  }

  auto [pair, precond_report] =
      maybe_update_pair(state.precond, *g, state.step, cfg.precond_freq, cfg.expansion_order);
  state.precond = std::move(pair);
  DenseMatrix preconditioned = precondition(state.precond, *g);

  StepReport report;
  report.lr_used = lr;
  report.precond_report = precond_report;
  report.update_norm = detail::momentum_and_move(state, *g, preconditioned, lr, cfg, report);
  detail::apply_decoupled_decay(state, lr, cfg);
  report.op_counts = op_counter_delta(before);
  return report;
}

inline StepReport apply_step(LayerState& state, const DenseMatrix& grad, double lr,
                             const OptimizerConfig& cfg) {
  switch (cfg.kind) {
    case OptimizerKind::jorge: return jorge_step(state, grad, lr, cfg);
    case OptimizerKind::shampoo_ref: return shampoo_ref_step(state, grad, lr, cfg);
    case OptimizerKind::sgd: return sgd_step(state, grad, lr, cfg);
    case OptimizerKind::adamw: return adamw_step(state, grad, lr, cfg);
  }
  throw ConfigError("apply_step: unknown optimizer kind");
}

}  // namespace jorge
