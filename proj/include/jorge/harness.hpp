// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "jorge/bootstrap.hpp"
#include "jorge/config.hpp"
#include "jorge/errors.hpp"
#include "jorge/optimizer.hpp"
#include "jorge/problems.hpp"
#include "jorge/trace.hpp"

namespace jorge {

namespace detail {

/// Per-epoch sample order, a pure function of (seed, epoch) so every
/// optimizer sees the same batch stream.
inline std::vector<std::size_t> epoch_order(std::size_t samples, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(samples);
  for (std::size_t i = 0; i < samples; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0xe90c + static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

inline double epoch_metric(const Problem& problem, const std::vector<DenseMatrix>& params,
                           const std::string& metric_kind) {
  if (metric_kind == "loss") return problem.full_train_loss(params);
  if (metric_kind == "neg_loss") return -problem.full_train_loss(params);
  return problem.metric(params);
}

inline bool target_reached(const std::string& metric_kind, double value, double target) {
  return metric_kind == "loss" ? value <= target : value >= target;
}

}  // namespace detail

/// Resolves the optimizer an experiment runs: either the configured one or
/// the jorge config bootstrapped from the SGD baseline.
inline OptimizerConfig resolve_optimizer(const ExperimentConfig& cfg) {
  if (!cfg.bootstrap) return cfg.optimizer;
  OptimizerConfig oc = bootstrap_jorge(cfg.sgd_baseline, cfg.target_overhead);
  if (cfg.precond_freq_override) oc.precond_freq = *cfg.precond_freq_override;
  oc.validate();
  return oc;
}

// One trial: train on the configured problem until the epoch budget runs out
// or the target is met. The trace records every step; timing columns are the
// only nondeterministic content.
inline TrainTrace run_single_trial(const ExperimentConfig& cfg, int trial) {
  DatasetSpec pspec = cfg.problem;
  pspec.seed = cfg.seed + static_cast<std::uint64_t>(trial);
  const Problem problem = make_problem(pspec);
  const OptimizerConfig ocfg = resolve_optimizer(cfg);

  TrainTrace trace;
  trace.problem = problem.name;
  trace.optimizer = cfg.label.empty() ? to_string(ocfg.kind) : cfg.label;
  trace.metric_kind =
      cfg.mode == RunMode::to_target ? cfg.target_metric : to_string(problem.metric_kind);
  trace.seed = pspec.seed;
  trace.trial = trial;

  std::vector<DenseMatrix> params = problem.initial_params();
  std::vector<LayerState> layers;
  layers.reserve(params.size());
  for (DenseMatrix& p : params) layers.push_back(init_layer_state(std::move(p), ocfg));

  const int epochs_budget = cfg.total_epochs();
  const std::size_t batch = static_cast<std::size_t>(cfg.problem.batch_size);
  const std::size_t num_batches = (problem.train_samples + batch - 1) / batch;

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed_ns = [&t0] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now() - t0)
        .count();
  };

  long global_step = 0;
  double best_metric = -1e300;
  bool have_best = false;

  std::vector<DenseMatrix> current;
  auto collect_params = [&layers, &current]() -> const std::vector<DenseMatrix>& {
    current.clear();
    for (const LayerState& st : layers) current.push_back(st.params);
    return current;
  };

  for (int epoch = 0; epoch < epochs_budget; ++epoch) {
    const std::vector<std::size_t> order =
        detail::epoch_order(problem.train_samples, pspec.seed, epoch);
    for (std::size_t b = 0; b < num_batches; ++b) {
      const std::size_t lo = b * batch;
      const std::size_t hi = std::min(lo + batch, problem.train_samples);
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);

      const double lr = lr_at(ocfg.lr_schedule, epoch,
                              static_cast<double>(b) / static_cast<double>(num_batches));
      const auto& p = collect_params();
      const double batch_loss = problem.loss(p, idx);
      const std::vector<DenseMatrix> grads = problem.grad(p, idx);
      if (grads.size() != layers.size())
        throw ShapeError("run_single_trial: gradient count does not match layer count");

      ++global_step;
      StepRecord rec;
      rec.step = global_step;
      rec.epoch = epoch;
      rec.lr = lr;
      rec.train_loss = batch_loss;
      rec.batch_hash = hash_batch(idx);
      try {
        if (!std::isfinite(batch_loss)) throw NumericError("training loss is not finite");
        for (std::size_t li = 0; li < layers.size(); ++li) {
          if (!all_finite(grads[li]))
            throw NumericError("layer " + std::to_string(li) + ": gradient is not finite");
          try {
            const StepReport rep = apply_step(layers[li], grads[li], lr, ocfg);
            rec.eig_calls += rep.op_counts.at("sym_eig");
            rec.invroot_calls += rep.op_counts.at("exact_inv_root");
          } catch (const NumericError& e) {
            throw NumericError("layer " + std::to_string(li) + ": " + e.what());
          }
        }
      } catch (const NumericError& e) {
        trace.summary.failed = true;
        trace.summary.failure = "step " + std::to_string(global_step) + ": " + e.what();
        rec.wall_ns = elapsed_ns();
        trace.steps.push_back(rec);
        trace.summary.total_wall_ns = rec.wall_ns;
        trace.summary.best_metric = have_best ? best_metric : 0.0;
        return trace;
      }
      rec.wall_ns = elapsed_ns();
      trace.steps.push_back(rec);
    }

    const double metric = detail::epoch_metric(problem, collect_params(), trace.metric_kind);
    trace.epochs.push_back({epoch, metric});
    const bool better = trace.metric_kind == "loss" ? (!have_best || metric < best_metric)
                                                    : (!have_best || metric > best_metric);
    if (better) best_metric = metric;
    have_best = true;

    if (cfg.mode == RunMode::to_target && trace.summary.epochs_to_target < 0 &&
        detail::target_reached(trace.metric_kind, metric, cfg.target_value)) {
      trace.summary.epochs_to_target = epoch;
      trace.summary.wall_ns_to_target = elapsed_ns();
      trace.summary.converged = true;
      break;
    }
  }

  trace.summary.total_wall_ns = elapsed_ns();
  trace.summary.best_metric = have_best ? best_metric : 0.0;
  if (cfg.mode == RunMode::max_epochs) trace.summary.converged = true;
  return trace;
}

/// All trials of an experiment. Trial k reseeds data and batch order with
/// seed + k; state is fully isolated per trial.
inline std::vector<TrainTrace> run_experiment(const ExperimentConfig& cfg,
                                              bool parallel_trials = false,
                                              int thread_cap = 0) {
  std::vector<TrainTrace> traces(static_cast<std::size_t>(cfg.trials));
  if (!parallel_trials || cfg.trials == 1) {
    for (int t = 0; t < cfg.trials; ++t) traces[static_cast<std::size_t>(t)] = run_single_trial(cfg, t);
    return traces;
  }
  int workers = thread_cap > 0 ? thread_cap : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, cfg.trials));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.trials));
  for (int base = 0; base < cfg.trials; base += workers) {
    std::vector<std::thread> pool;
    for (int t = base; t < std::min(base + workers, cfg.trials); ++t) {
      pool.emplace_back([&cfg, &traces, &errors, t] {
        try {
          traces[static_cast<std::size_t>(t)] = run_single_trial(cfg, t);
        } catch (...) {
          errors[static_cast<std::size_t>(t)] = std::current_exception();
        }
      });
    }
    for (std::thread& th : pool) th.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  return traces;
}

inline std::string trace_basename(const TrainTrace& t) {
  return t.problem + "_" + t.optimizer + "_s" + std::to_string(t.seed) + "_t" +
         std::to_string(t.trial);
}

inline void write_traces(const std::vector<TrainTrace>& traces, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const TrainTrace& t : traces) {
    const std::string base = (std::filesystem::path(dir) / trace_basename(t)).string();
    write_trace_csv(t, base + ".csv");
    write_trace_json(t, base + ".json");
  }
}

// ---- comparisons ----------------------------------------------------------

struct CompareRow {
  std::string optimizer;
  int trials = 0;
  double best_metric_mean = 0.0, best_metric_std = 0.0;
  double epochs_mean = 0.0, epochs_std = 0.0;  // epochs-to-target (0-based index)
  double wall_minutes_mean = 0.0, wall_minutes_std = 0.0;
  int did_not_converge = 0;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

}  // namespace detail

// mu +/- sigma of best metric, epochs-to-target and wall-clock-to-target per
// optimizer, plus ratios against the baseline row. Requires at least two
// optimizers with equal trial counts.
inline std::string compare_report(const std::map<std::string, std::vector<TrainTrace>>& by_opt,
                                  const std::string& baseline = "sgd") {
  if (by_opt.size() < 2) throw ConfigError("compare_report: need at least two optimizers");
  std::size_t trials = 0;
  for (const auto& [name, traces] : by_opt) {
    if (traces.empty()) throw ConfigError("compare_report: no traces for optimizer " + name);
    if (trials == 0) trials = traces.size();
    if (traces.size() != trials)
      throw ConfigError("compare_report: optimizers have mismatched trial counts");
  }

  std::map<std::string, CompareRow> rows;
  for (const auto& [name, traces] : by_opt) {
    CompareRow row;
    row.optimizer = name;
    row.trials = static_cast<int>(traces.size());
    std::vector<double> best, epochs, wall;
    for (const TrainTrace& t : traces) {
      best.push_back(t.summary.best_metric);
      if (t.summary.epochs_to_target >= 0) {
        epochs.push_back(static_cast<double>(t.summary.epochs_to_target));
        wall.push_back(static_cast<double>(t.summary.wall_ns_to_target) / 6e10);
      } else {
        ++row.did_not_converge;
      }
    }
    std::tie(row.best_metric_mean, row.best_metric_std) = detail::mean_std(best);
    std::tie(row.epochs_mean, row.epochs_std) = detail::mean_std(epochs);
    std::tie(row.wall_minutes_mean, row.wall_minutes_std) = detail::mean_std(wall);
    rows[name] = row;
  }

  const bool have_baseline = rows.count(baseline) > 0;
  const CompareRow base = have_baseline ? rows.at(baseline) : CompareRow{};

  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %6s %22s %22s %22s %10s %10s\n", "optimizer", "trials",
                "best_metric", "epochs_to_target", "wall_minutes", "ep_ratio", "wall_ratio");
  out << line;
  for (const auto& [name, r] : rows) {
    std::string ep_ratio = "-", wall_ratio = "-";
    if (have_baseline && base.epochs_mean > 0.0 && r.epochs_mean > 0.0) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3f", r.epochs_mean / base.epochs_mean);
      ep_ratio = buf;
    }
    if (have_baseline && base.wall_minutes_mean > 0.0 && r.wall_minutes_mean > 0.0) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3f", r.wall_minutes_mean / base.wall_minutes_mean);
      wall_ratio = buf;
    }
    std::string epochs_cell;
    if (r.did_not_converge == r.trials) {
      epochs_cell = "did not converge";
    } else {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.1f +/- %.1f", r.epochs_mean, r.epochs_std);
      epochs_cell = buf;
      if (r.did_not_converge > 0)
        epochs_cell += " (" + std::to_string(r.did_not_converge) + " dnc)";
    }
    char metric_cell[64], wall_cell[64];
    std::snprintf(metric_cell, sizeof(metric_cell), "%.6g +/- %.2g", r.best_metric_mean,
                  r.best_metric_std);
    std::snprintf(wall_cell, sizeof(wall_cell), "%.3f +/- %.3f", r.wall_minutes_mean,
                  r.wall_minutes_std);
    std::snprintf(line, sizeof(line), "%-10s %6d %22s %22s %22s %10s %10s\n", name.c_str(),
                  r.trials, metric_cell, epochs_cell.c_str(), wall_cell, ep_ratio.c_str(),
                  wall_ratio.c_str());
    out << line;
  }
  return out.str();
}

// ---- calibration ----------------------------------------------------------

// Median per-step wall time for several optimizer configurations measured
// together. The measured step is the full iteration: gradient evaluation
// plus the optimizer update. Configurations are stepped round-robin and a
// warm-up pass runs untimed first, so machine-load drift and cold caches
// land on every configuration equally instead of biasing whichever was
// measured first.
inline std::vector<double> measure_median_step_ns(const Problem& problem,
                                                  const std::vector<OptimizerConfig>& configs,
                                                  std::uint64_t seed, int steps, int batch_size,
                                                  int warmup_steps = 5) {
  const std::size_t n = configs.size();
  std::vector<std::vector<LayerState>> states(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<DenseMatrix> params = problem.initial_params();
    for (DenseMatrix& p : params) states[c].push_back(init_layer_state(std::move(p), configs[c]));
  }

  const std::size_t batch = static_cast<std::size_t>(batch_size);
  std::vector<std::vector<double>> times(n);
  std::vector<DenseMatrix> current;
  int done = -warmup_steps;
  for (int epoch = 0; done < steps; ++epoch) {
    const std::vector<std::size_t> order = detail::epoch_order(problem.train_samples, seed, epoch);
    const std::size_t num_batches = (problem.train_samples + batch - 1) / batch;
    for (std::size_t b = 0; b < num_batches && done < steps; ++b, ++done) {
      const std::size_t lo = b * batch;
      const std::size_t hi = std::min(lo + batch, problem.train_samples);
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      for (std::size_t c = 0; c < n; ++c) {
        const auto t0 = std::chrono::steady_clock::now();
        current.clear();
        for (const LayerState& st : states[c]) current.push_back(st.params);
        const std::vector<DenseMatrix> grads = problem.grad(current, idx);
        for (std::size_t li = 0; li < states[c].size(); ++li)
          apply_step(states[c][li], grads[li], 1e-3, configs[c]);
        const auto t1 = std::chrono::steady_clock::now();
        if (done >= 0)
          times[c].push_back(static_cast<double>(
              std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
      }
    }
  }
  std::vector<double> medians(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::sort(times[c].begin(), times[c].end());
    medians[c] = times[c][times[c].size() / 2];
  }
  return medians;
}

/// 30-step micro-run: SGD and the inverse-free optimizer at each power-of-two
/// update frequency up to `max_freq`, all interleaved.
inline CalibrationMeasurement run_calibration(const Problem& problem,
                                              const ExperimentConfig& cfg,
                                              int steps = 30, long max_freq = 64) {
  OptimizerConfig sgd_cfg;
  sgd_cfg.kind = OptimizerKind::sgd;
  sgd_cfg.lr_schedule = ScheduleSpec{ScheduleKind::constant, 1e-3, 1 << 20, {}, 0.1, 0.9, 0};
  sgd_cfg.beta1 = cfg.bootstrap ? cfg.sgd_baseline.momentum : 0.9;

  OptimizerConfig jorge_cfg = resolve_optimizer(cfg);
  if (jorge_cfg.kind != OptimizerKind::jorge)
    throw ConfigError("run_calibration: experiment does not configure a jorge optimizer");

  std::vector<OptimizerConfig> configs{sgd_cfg};
  std::vector<long> freqs;
  for (long freq = 1; freq <= max_freq; freq *= 2) {
    jorge_cfg.precond_freq = freq;
    configs.push_back(jorge_cfg);
    freqs.push_back(freq);
  }
  const std::vector<double> medians =
      measure_median_step_ns(problem, configs, cfg.seed, steps, cfg.problem.batch_size);

  CalibrationMeasurement m;
  m.sgd_median_step_ns = medians[0];
  for (std::size_t i = 0; i < freqs.size(); ++i)
    m.jorge_median_step_ns.emplace_back(freqs[i], medians[i + 1]);
  return m;
}

}  // namespace jorge
