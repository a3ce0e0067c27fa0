// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "jorge/bootstrap.hpp"
#include "jorge/errors.hpp"
#include "jorge/optimizer.hpp"
#include "jorge/problems.hpp"

namespace jorge {

enum class RunMode { max_epochs, to_target };

// One experiment: a problem, an optimizer (given directly or bootstrapped
// from an SGD baseline), and a stopping rule.
struct ExperimentConfig {
  DatasetSpec problem;

  bool bootstrap = false;        // derive the jorge config from sgd_baseline
  OptimizerConfig optimizer;     // used directly when !bootstrap
  SgdBaseline sgd_baseline;      // bootstrap input; also drives `calibrate`
  std::optional<long> precond_freq_override;  // explicit freq for the bootstrapped config
  double target_overhead = 0.10;

  RunMode mode = RunMode::max_epochs;
  int max_epochs = 1;
  std::string target_metric = "loss";  // loss | accuracy | neg_loss
  double target_value = 0.0;
  int cap_epochs = 1;

  std::uint64_t seed = 1;
  int trials = 1;
  std::string out_dir = ".";
  std::string label;  // filename/optimizer label; defaults to the kind name

  int total_epochs() const { return mode == RunMode::max_epochs ? max_epochs : cap_epochs; }
};

namespace detail {

class KvSection {
 public:
  KvSection() = default;
  KvSection(std::string name, std::map<std::string, std::string> kv)
      : name_(std::move(name)), kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("[" + name_ + "] missing required key '" + key + "'");
    used_.insert(key);
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    return has(key) ? get_string(key) : fallback;
  }

  double get_double(const std::string& key) {
    const std::string raw = get_string(key);
    try {
      std::size_t pos = 0;
      const double v = std::stod(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument(raw);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("[" + name_ + "] key '" + key + "': not a number: '" + raw + "'");
    }
  }
  double get_double(const std::string& key, double fallback) {
    return has(key) ? get_double(key) : fallback;
  }

  long get_long(const std::string& key) {
    const std::string raw = get_string(key);
    try {
      std::size_t pos = 0;
      const long v = std::stol(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument(raw);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("[" + name_ + "] key '" + key + "': not an integer: '" + raw + "'");
    }
  }
  long get_long(const std::string& key, long fallback) {
    return has(key) ? get_long(key) : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string raw = get_string(key);
    if (raw == "true" || raw == "1") return true;
    if (raw == "false" || raw == "0") return false;
    throw ConfigError("[" + name_ + "] key '" + key + "': expected true/false, got '" + raw + "'");
  }

  std::vector<int> get_int_list(const std::string& key) {
    const std::string raw = get_string(key);
    std::vector<int> vals;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        vals.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw ConfigError("[" + name_ + "] key '" + key + "': not an integer list: '" + raw + "'");
      }
    }
    return vals;
  }

  /// Every key must have been consumed; silent typos become hard errors.
  void reject_unused() const {
    for (const auto& [key, value] : kv_)
      if (!used_.count(key))
        throw ConfigError("[" + name_ + "] unknown key '" + key + "'");
  }

 private:
  std::string name_;
  std::map<std::string, std::string> kv_;
  std::set<std::string> used_;
};

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::map<std::string, KvSection> parse_sections(std::istream& in) {
  std::map<std::string, std::map<std::string, std::string>> raw;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      raw[section];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": key outside of any [section]");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (raw[section].count(key))
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    raw[section][key] = value;
  }
  std::map<std::string, KvSection> out;
  for (auto& [name, kv] : raw) out.emplace(name, KvSection(name, std::move(kv)));
  return out;
}

inline ScheduleSpec parse_schedule(KvSection& s, int total_epochs) {
  ScheduleSpec spec;
  const std::string kind = s.get_string("schedule", "constant");
  if (kind == "constant") spec.kind = ScheduleKind::constant;
  else if (kind == "step_decay") spec.kind = ScheduleKind::step_decay;
  else if (kind == "cosine") spec.kind = ScheduleKind::cosine;
  else if (kind == "polynomial") spec.kind = ScheduleKind::polynomial;
  else throw ConfigError("unknown schedule kind '" + kind + "'");
  spec.base_lr = s.get_double("lr");
  spec.total_epochs = total_epochs;
  if (s.has("decay_epochs")) spec.decay_epochs = s.get_int_list("decay_epochs");
  spec.decay_factor = s.get_double("decay_factor", 0.1);
  spec.poly_power = s.get_double("poly_power", 0.9);
  spec.warmup_epochs = static_cast<int>(s.get_long("warmup_epochs", 0));
  spec.validate();
  return spec;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(std::istream& in) {
  auto sections = detail::parse_sections(in);
  for (const auto& [name, _] : sections)
    if (name != "problem" && name != "optimizer" && name != "sgd_baseline" && name != "run")
      throw ConfigError("unknown section [" + name + "]");
  if (!sections.count("problem")) throw ConfigError("missing [problem] section");
  if (!sections.count("optimizer")) throw ConfigError("missing [optimizer] section");
  if (!sections.count("run")) throw ConfigError("missing [run] section");

  ExperimentConfig cfg;

  {
    detail::KvSection& run = sections.at("run");
    const std::string mode = run.get_string("mode");
    if (mode == "max_epochs") {
      cfg.mode = RunMode::max_epochs;
      cfg.max_epochs = static_cast<int>(run.get_long("max_epochs"));
      if (cfg.max_epochs < 1) throw ConfigError("[run] max_epochs must be positive");
    } else if (mode == "to_target") {
      cfg.mode = RunMode::to_target;
      cfg.target_metric = run.get_string("target_metric");
      if (cfg.target_metric != "loss" && cfg.target_metric != "accuracy" &&
          cfg.target_metric != "neg_loss")
        throw ConfigError("[run] target_metric must be loss, neg_loss or accuracy");
      cfg.target_value = run.get_double("target_value");
      cfg.cap_epochs = static_cast<int>(run.get_long("cap_epochs"));
      if (cfg.cap_epochs < 1) throw ConfigError("[run] cap_epochs must be positive");
    } else {
      throw ConfigError("[run] mode must be max_epochs or to_target");
    }
    cfg.seed = static_cast<std::uint64_t>(run.get_long("seed", 1));
    cfg.trials = static_cast<int>(run.get_long("trials", 1));
    if (cfg.trials < 1) throw ConfigError("[run] trials must be >= 1");
    cfg.out_dir = run.get_string("out", ".");
    run.reject_unused();
  }

  {
    detail::KvSection& pr = sections.at("problem");
    cfg.problem.kind = pr.get_string("kind");
    cfg.problem.seed = cfg.seed;
    if (cfg.problem.kind == "quadratic") {
      cfg.problem.dim = static_cast<int>(pr.get_long("dim"));
      cfg.problem.cond = pr.get_double("cond", 1.0);
      cfg.problem.samples = 1;
      cfg.problem.batch_size = 1;
    } else if (cfg.problem.kind == "logreg") {
      cfg.problem.dim = static_cast<int>(pr.get_long("dim"));
      cfg.problem.samples = static_cast<int>(pr.get_long("samples"));
      cfg.problem.batch_size = static_cast<int>(pr.get_long("batch_size", 32));
    } else if (cfg.problem.kind == "mlp") {
      cfg.problem.in_dim = static_cast<int>(pr.get_long("in_dim"));
      cfg.problem.hidden = static_cast<int>(pr.get_long("hidden"));
      cfg.problem.classes = static_cast<int>(pr.get_long("classes"));
      cfg.problem.samples = static_cast<int>(pr.get_long("samples"));
      cfg.problem.batch_size = static_cast<int>(pr.get_long("batch_size", 32));
    } else {
      throw ConfigError("[problem] kind must be quadratic, logreg or mlp");
    }
    if (cfg.problem.batch_size < 1 || cfg.problem.batch_size > cfg.problem.samples)
      throw ConfigError("[problem] batch_size must be in [1, samples]");
    pr.reject_unused();
  }

  const int total = cfg.total_epochs();
  {
    detail::KvSection& opt = sections.at("optimizer");
    const std::string kind = opt.get_string("kind");
    if (kind == "jorge_bootstrap") {
      cfg.bootstrap = true;
      cfg.label = opt.get_string("label", "jorge");
      cfg.target_overhead = opt.get_double("target_overhead", 0.10);
      if (opt.has("precond_freq")) cfg.precond_freq_override = opt.get_long("precond_freq");
      opt.reject_unused();
      if (!sections.count("sgd_baseline"))
        throw ConfigError("kind jorge_bootstrap requires an [sgd_baseline] section");
      detail::KvSection& base = sections.at("sgd_baseline");
      cfg.sgd_baseline.lr = base.get_double("lr");
      cfg.sgd_baseline.momentum = base.get_double("momentum", 0.9);
      cfg.sgd_baseline.weight_decay = base.get_double("weight_decay", 0.0);
      cfg.sgd_baseline.total_epochs = total;
      cfg.sgd_baseline.schedule = detail::parse_schedule(base, total);
      base.reject_unused();
      cfg.sgd_baseline.validate();
    } else {
      if (sections.count("sgd_baseline"))
        throw ConfigError("[sgd_baseline] is only valid with kind jorge_bootstrap");
      OptimizerConfig& oc = cfg.optimizer;
      if (kind == "sgd") oc.kind = OptimizerKind::sgd;
      else if (kind == "adamw") oc.kind = OptimizerKind::adamw;
      else if (kind == "shampoo") oc.kind = OptimizerKind::shampoo_ref;
      else if (kind == "jorge") oc.kind = OptimizerKind::jorge;
      else throw ConfigError("[optimizer] kind must be sgd, adamw, shampoo, jorge or jorge_bootstrap");
      cfg.label = opt.get_string("label", kind);
      oc.lr_schedule = detail::parse_schedule(opt, total);
      oc.beta1 = opt.get_double("momentum", 0.9);
      oc.weight_decay = opt.get_double("weight_decay", 0.0);
      oc.decoupled_wd =
          opt.get_bool("decoupled_wd", oc.kind == OptimizerKind::jorge ? true : false);
      oc.epsilon = opt.get_double("epsilon", 1e-6);
      oc.precond_freq = opt.get_long("precond_freq", 1);
      const long order = opt.get_long("expansion_order", 2);
      if (order != 1 && order != 2) throw ConfigError("[optimizer] expansion_order must be 1 or 2");
      oc.expansion_order = order == 1 ? ExpansionOrder::first : ExpansionOrder::second;
      oc.grafting = opt.get_bool("grafting", false);
      oc.adam_beta1 = opt.get_double("adam_beta1", 0.9);
      oc.adam_beta2 = opt.get_double("adam_beta2", 0.999);
      oc.adam_eps = opt.get_double("adam_eps", 1e-8);
      oc.shampoo_beta2 = opt.get_double("shampoo_beta2", 0.9);
      opt.reject_unused();
      oc.validate();
    }
  }

  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return parse_experiment_config(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace jorge
