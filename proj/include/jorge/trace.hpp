// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jorge/errors.hpp"
#include "jorge/problems.hpp"

namespace jorge {

struct StepRecord {
  long step = 0;  // global, 1-based, strictly increasing
  int epoch = 0;  // 0-based
  double lr = 0.0;
  double train_loss = 0.0;        // batch loss before the update
  long long wall_ns = 0;          // cumulative monotonic time at end of step
  std::uint64_t batch_hash = 0;   // FNV-1a over the consumed sample indices
  std::uint64_t eig_calls = 0;    // summed over layers for this step
  std::uint64_t invroot_calls = 0;
};

struct EpochRecord {
  int epoch = 0;
  double metric = 0.0;
};

struct TraceSummary {
  int epochs_to_target = -1;  // first 0-based epoch index meeting the target, -1 if none
  double best_metric = 0.0;
  long long total_wall_ns = 0;
  long long wall_ns_to_target = -1;
  bool converged = false;
  bool failed = false;
  std::string failure;
};

struct TrainTrace {
  std::string problem;
  std::string optimizer;
  std::string metric_kind;  // "accuracy" | "neg_loss" | "loss"
  std::uint64_t seed = 0;
  int trial = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  TraceSummary summary;
};

inline const char* trace_csv_header() {
  return "step,epoch,lr,train_loss,wall_ns,batch_hash,eig_calls,invroot_calls";
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_trace_csv(const TrainTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open trace output file: " + path);
  out << trace_csv_header() << '\n';
  for (const StepRecord& r : trace.steps) {
    out << r.step << ',' << r.epoch << ',' << format_double(r.lr) << ','
        << format_double(r.train_loss) << ',' << r.wall_ns << ',' << r.batch_hash << ','
        << r.eig_calls << ',' << r.invroot_calls << '\n';
  }
}

inline nlohmann::json trace_summary_json(const TrainTrace& trace) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochRecord& e : trace.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"metric", e.metric}});
  return nlohmann::json{
      {"problem", trace.problem},
      {"optimizer", trace.optimizer},
      {"metric_kind", trace.metric_kind},
      {"seed", trace.seed},
      {"trial", trace.trial},
      {"epochs", epochs},
      {"summary",
       {{"epochs_to_target", trace.summary.epochs_to_target},
        {"best_metric", trace.summary.best_metric},
        {"total_wall_ns", trace.summary.total_wall_ns},
        {"wall_ns_to_target", trace.summary.wall_ns_to_target},
        {"converged", trace.summary.converged},
        {"failed", trace.summary.failed},
        {"failure", trace.summary.failure}}},
  };
}

inline void write_trace_json(const TrainTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open trace summary file: " + path);
  out << trace_summary_json(trace).dump(2) << '\n';
}

/// Reads the JSON sidecar back (per-step CSV rows are not needed for
/// comparisons and are left on disk).
inline TrainTrace read_trace_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace summary file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed trace summary " + path + ": " + e.what());
  }
  TrainTrace t;
  try {
    t.problem = j.at("problem").get<std::string>();
    t.optimizer = j.at("optimizer").get<std::string>();
    t.metric_kind = j.at("metric_kind").get<std::string>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.trial = j.at("trial").get<int>();
    for (const auto& e : j.at("epochs"))
      t.epochs.push_back({e.at("epoch").get<int>(), e.at("metric").get<double>()});
    const auto& s = j.at("summary");
    t.summary.epochs_to_target = s.at("epochs_to_target").get<int>();
    t.summary.best_metric = s.at("best_metric").get<double>();
    t.summary.total_wall_ns = s.at("total_wall_ns").get<long long>();
    t.summary.wall_ns_to_target = s.at("wall_ns_to_target").get<long long>();
    t.summary.converged = s.at("converged").get<bool>();
    t.summary.failed = s.at("failed").get<bool>();
    t.summary.failure = s.at("failure").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("trace summary " + path + " is missing fields: " + e.what());
  }
  return t;
}

/// FNV-1a over the little-endian bytes of each index, in consumption order.
inline std::uint64_t hash_batch(std::span<const std::size_t> indices) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t idx : indices) {
    std::uint64_t v = idx;
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffULL;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace jorge
