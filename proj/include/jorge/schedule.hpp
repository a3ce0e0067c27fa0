// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "jorge/errors.hpp"

namespace jorge {

enum class ScheduleKind { constant, step_decay, cosine, polynomial };

inline std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::step_decay: return "step_decay";
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::polynomial: return "polynomial";
  }
  return "?";
}

// Learning-rate schedule. warmup_epochs > 0 wraps any kind in a linear
// warmup: the rate climbs from base_lr/warmup_epochs to base_lr across the
// warmup window, then the underlying schedule takes over (evaluated on
// absolute epochs, so decay epochs are counted from the start of training).
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::constant;
  double base_lr = 0.1;
  int total_epochs = 1;
  std::vector<int> decay_epochs;  // step_decay only; strictly increasing, < total
  double decay_factor = 0.1;      // in (0,1)
  double poly_power = 0.9;
  int warmup_epochs = 0;

  void validate() const {
    if (!(base_lr > 0.0)) throw ConfigError("schedule: base_lr must be positive");
    if (total_epochs < 1) throw ConfigError("schedule: total_epochs must be positive");
    if (warmup_epochs < 0 || warmup_epochs >= total_epochs)
      throw ConfigError("schedule: warmup_epochs out of range");
    if (kind == ScheduleKind::step_decay) {
      if (!(decay_factor > 0.0 && decay_factor < 1.0))
        throw ConfigError("schedule: decay_factor must be in (0,1)");
      for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
        if (decay_epochs[i] < 0 || decay_epochs[i] >= total_epochs)
          throw ConfigError("schedule: decay epoch out of range");
        if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1])
          throw ConfigError("schedule: decay epochs must be strictly increasing");
      }
    }
    if (kind == ScheduleKind::polynomial && !(poly_power > 0.0))
      throw ConfigError("schedule: poly_power must be positive");
  }
};

/// Learning rate at a (0-based) epoch, with step_in_epoch in [0,1) giving
/// sub-epoch resolution for the smooth schedules.
inline double lr_at(const ScheduleSpec& spec, int epoch, double step_in_epoch = 0.0) {
  if (epoch < 0 || epoch >= spec.total_epochs)
    throw ConfigError("lr_at: epoch " + std::to_string(epoch) + " out of range");
  const double pos = static_cast<double>(epoch) + step_in_epoch;

  if (spec.warmup_epochs > 0 && pos < static_cast<double>(spec.warmup_epochs)) {
    const double w = static_cast<double>(spec.warmup_epochs);
    const double u = pos / w;  // in [0,1)
    return spec.base_lr * ((1.0 - u) / w + u);
  }

  switch (spec.kind) {
    case ScheduleKind::constant:
      return spec.base_lr;
    case ScheduleKind::step_decay: {
      int decays = 0;
      for (int d : spec.decay_epochs)
        if (epoch >= d) ++decays;
      return spec.base_lr * std::pow(spec.decay_factor, decays);
    }
    case ScheduleKind::cosine: {
      const double progress = pos / static_cast<double>(spec.total_epochs);
      return spec.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
    case ScheduleKind::polynomial: {
      const double progress = pos / static_cast<double>(spec.total_epochs);
      return spec.base_lr * std::pow(1.0 - progress, spec.poly_power);
    }
  }
  throw ConfigError("lr_at: unknown schedule kind");
}

}  // namespace jorge
