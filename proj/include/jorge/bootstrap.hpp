// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "jorge/errors.hpp"
#include "jorge/optimizer.hpp"
#include "jorge/schedule.hpp"

namespace jorge {

/// A tuned SGD configuration, the single input of the bootstrap.
struct SgdBaseline {
  double lr = 0.1;
  double momentum = 0.9;       // beta_sgd, in [0,1)
  double weight_decay = 0.0;   // lambda_sgd (coupled L2)
  ScheduleSpec schedule;
  int total_epochs = 1;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("sgd baseline: lr must be positive");
    if (!(momentum >= 0.0) || momentum >= 1.0)
      throw ConfigError("sgd baseline: momentum must be in [0,1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("sgd baseline: weight_decay must be >= 0");
    if (total_epochs < 1) throw ConfigError("sgd baseline: total_epochs must be positive");
  }
};

// Total influence a single coupled-L2 decay term exerts on the weights when
// it keeps riding inside heavy-ball momentum for `horizon` steps:
//   lam * (1 + beta + beta^2 + ...) = lam * (1 - beta^horizon) / (1 - beta),
// approaching lam / (1 - beta). Matching that with a one-shot decoupled decay
// is what scales lambda by 1/(1-beta) in the bootstrap.
inline double effective_wd_contribution(double beta, double lam, long horizon) {
  if (horizon < 1) throw ConfigError("effective_wd_contribution: horizon must be positive");
  if (beta == 0.0) return lam;
  return lam * (1.0 - std::pow(beta, static_cast<double>(horizon))) / (1.0 - beta);
}

/// Median per-step wall times from a calibration micro-run: SGD once, the
/// inverse-free optimizer at each candidate update frequency.
struct CalibrationMeasurement {
  double sgd_median_step_ns = 0.0;
  std::vector<std::pair<long, double>> jorge_median_step_ns;  // (freq, median ns), freq ascending
};

/// Smallest measured frequency whose per-step overhead over SGD is within
/// `target_overhead` (e.g. 0.10 for 10%). Falls back to the largest measured
/// frequency when none qualifies.
inline long pick_precond_freq(const CalibrationMeasurement& m, double target_overhead) {
  if (m.jorge_median_step_ns.empty() || !(m.sgd_median_step_ns > 0.0))
    throw ConfigError("pick_precond_freq: empty or invalid calibration measurement");
  const double budget = (1.0 + target_overhead) * m.sgd_median_step_ns;
  for (const auto& [freq, ns] : m.jorge_median_step_ns)
    if (ns <= budget) return freq;
  return m.jorge_median_step_ns.back().first;
}

// Single-shot derivation of the inverse-free optimizer's hyperparameters from
// a tuned SGD baseline:
//   - grafting on, so the SGD learning rate (and warmup) carry over directly;
//   - decoupled weight decay lambda_sgd / (1 - beta_sgd);
//   - momentum equal to SGD's;
//   - the schedule is always replaced by a two-step decay (0.1x) at one third
//     and two thirds of the training budget, keeping any warmup;
//   - the update frequency comes from the calibration measurement when one is
//     supplied, and is left at its default otherwise.
inline OptimizerConfig bootstrap_jorge(
    const SgdBaseline& sgd, double target_iter_overhead = 0.10,
    const std::optional<CalibrationMeasurement>& calibration = std::nullopt) {
  sgd.validate();

  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::jorge;
  cfg.grafting = true;
  cfg.beta1 = sgd.momentum;
  cfg.weight_decay = sgd.weight_decay / (1.0 - sgd.momentum);
  cfg.decoupled_wd = true;

  ScheduleSpec sched;
  sched.kind = ScheduleKind::step_decay;
  sched.base_lr = sgd.lr;
  sched.total_epochs = sgd.total_epochs;
  sched.decay_epochs = {sgd.total_epochs / 3, 2 * sgd.total_epochs / 3};
  sched.decay_factor = 0.1;
  sched.warmup_epochs = sgd.schedule.warmup_epochs;
  sched.validate();
  cfg.lr_schedule = sched;

  if (calibration) cfg.precond_freq = pick_precond_freq(*calibration, target_iter_overhead);
  cfg.validate();
  return cfg;
}

}  // namespace jorge
