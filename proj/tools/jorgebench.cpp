// SPDX-License-Identifier: Apache-2.0
//
// jorgebench: run desk-scale optimizer experiments, compare trace outputs and
// calibrate the preconditioner update frequency.
//
// Exit codes: 0 success, 2 config error, 3 numeric failure, 4 target not
// reached.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jorge/config.hpp"
#include "jorge/harness.hpp"
#include "jorge/trace.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

int thread_cap_from_env() {
  const char* v = std::getenv("JORGE_THREADS");
  if (v == nullptr) return 0;
  try {
    return std::max(1, std::stoi(v));
  } catch (const std::exception&) {
    std::cerr << "warning: ignoring invalid JORGE_THREADS value '" << v << "'\n";
    return 0;
  }
}

int cmd_run(const std::string& config_path, int trials_override, const std::string& out_override,
            long seed_override, bool parallel) {
  jorge::ExperimentConfig cfg = jorge::load_experiment_config(config_path);
  if (trials_override > 0) cfg.trials = trials_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (seed_override >= 0) {
    cfg.seed = static_cast<std::uint64_t>(seed_override);
    cfg.problem.seed = cfg.seed;
  }

  const std::vector<jorge::TrainTrace> traces =
      jorge::run_experiment(cfg, parallel, thread_cap_from_env());
  jorge::write_traces(traces, cfg.out_dir);

  bool any_failed = false, all_converged = true;
  for (const jorge::TrainTrace& t : traces) {
    std::cout << jorge::trace_basename(t) << ": ";
    if (t.summary.failed) {
      std::cout << "FAILED (" << t.summary.failure << ")\n";
      any_failed = true;
      continue;
    }
    if (cfg.mode == jorge::RunMode::to_target) {
      if (t.summary.converged) {
        std::cout << "target met at epoch " << t.summary.epochs_to_target;
      } else {
        std::cout << "did not converge within " << cfg.cap_epochs << " epochs";
        all_converged = false;
      }
    } else {
      std::cout << "best " << t.metric_kind << " = " << t.summary.best_metric;
    }
    std::cout << " (" << t.steps.size() << " steps, "
              << static_cast<double>(t.summary.total_wall_ns) / 1e9 << " s)\n";
  }
  if (any_failed) return 3;
  if (cfg.mode == jorge::RunMode::to_target && !all_converged) return 4;
  return 0;
}

int cmd_compare(const std::string& trace_dir, const std::string& baseline) {
  std::map<std::string, std::vector<jorge::TrainTrace>> by_opt;
  for (const auto& entry : std::filesystem::directory_iterator(trace_dir)) {
    if (entry.path().extension() != ".json") continue;
    jorge::TrainTrace t = jorge::read_trace_json(entry.path().string());
    by_opt[t.optimizer].push_back(std::move(t));
  }
  if (by_opt.empty()) throw jorge::ConfigError("no trace summaries (*.json) in " + trace_dir);
  std::cout << jorge::compare_report(by_opt, baseline);
  return 0;
}

int cmd_calibrate(const std::string& config_path) {
  const jorge::ExperimentConfig cfg = jorge::load_experiment_config(config_path);
  jorge::DatasetSpec pspec = cfg.problem;
  pspec.seed = cfg.seed;
  const jorge::Problem problem = jorge::make_problem(pspec);

  const jorge::CalibrationMeasurement m = jorge::run_calibration(problem, cfg);
  const long chosen = jorge::pick_precond_freq(m, cfg.target_overhead);

  std::cout << "sgd median step: " << m.sgd_median_step_ns / 1e3 << " us\n";
  for (const auto& [freq, ns] : m.jorge_median_step_ns)
    std::cout << "jorge freq " << freq << ": " << ns / 1e3 << " us ("
              << ns / m.sgd_median_step_ns << "x sgd)" << (freq == chosen ? "  <- chosen" : "")
              << "\n";
  std::cout << "recommended precond_freq = " << chosen << " (overhead target "
            << cfg.target_overhead * 100.0 << "%)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale benchmark harness for the jorge optimizer family"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(0, 1);

  std::string config_path, out_dir, trace_dir, baseline = "sgd";
  int trials = 0;
  long seed = -1;
  bool parallel = false;

  CLI::App* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_option("--trials", trials, "override trial count");
  run->add_option("--out", out_dir, "override output directory");
  run->add_option("--seed", seed, "override experiment seed");
  run->add_flag("--parallel-trials", parallel,
                "run trials concurrently (capped by JORGE_THREADS)");

  CLI::App* compare = app.add_subcommand("compare", "summarize traces from a directory");
  compare->add_option("trace_dir", trace_dir, "directory with trace .json summaries")->required();
  compare->add_option("--baseline", baseline, "baseline optimizer label for ratios");

  CLI::App* calibrate =
      app.add_subcommand("calibrate", "pick the preconditioner update frequency");
  calibrate->add_option("config", config_path, "experiment config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run->parsed()) return cmd_run(config_path, trials, out_dir, seed, parallel);
    if (compare->parsed()) return cmd_compare(trace_dir, baseline);
    if (calibrate->parsed()) return cmd_calibrate(config_path);
    std::cout << app.help();
    return 0;
  } catch (const jorge::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const jorge::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const jorge::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
