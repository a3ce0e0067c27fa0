// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace jorge {

// Instrumentation counters for the operations whose presence (or absence)
// the step rules advertise. Counters are thread-local so concurrent trials
// do not see each other's work.
struct OpCounters {
  std::uint64_t matmul = 0;
  std::uint64_t sym_eig = 0;
  std::uint64_t exact_inv_root = 0;
};

inline OpCounters& op_counters() {
  thread_local OpCounters counters;
  return counters;
}

inline OpCounters snapshot_op_counters() { return op_counters(); }

/// Per-op deltas since `before`, keyed by op name.
inline std::map<std::string, std::uint64_t> op_counter_delta(const OpCounters& before) {
  const OpCounters& now = op_counters();
  return {
      {"matmul", now.matmul - before.matmul},
      {"sym_eig", now.sym_eig - before.sym_eig},
      {"exact_inv_root", now.exact_inv_root - before.exact_inv_root},
  };
}

}  // namespace jorge
