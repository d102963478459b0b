// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "pythia/cache/hierarchy.hpp"
#include "pythia/sim/config.hpp"
#include "pythia/sim/metrics.hpp"

namespace pythia::sim {

// Prefill latency from the per-tier matched prefix: uncached tokens compute
// at the prefill rate, L2-resident tokens cross PCIe, L3-resident tokens pay
// the shared-store fetch. reusable = the deepest match.
double prefill_time(int64_t prompt_len, const cache::CacheHierarchy::Match& match,
                    const ModelSpec& model);

// Per-request decode interval with n concurrent decoders.
double decode_interval(const ModelSpec& model, int n);

struct SimOptions {
  uint64_t seed = 1;
  bool record_event_log = false;      // (time, kind, id) tuples, for equivalence checks
  bool audit_cache_exactness = false; // verify Algorithm-1 exactness after every completion
  double max_sim_time = 500000.0;
  double stall_timeout = 20000.0;     // simulated seconds without progress
};

struct SimResult {
  MetricsReport metrics;
  std::vector<std::string> event_log;
  std::vector<std::string> routing_log;  // JSON lines
  std::vector<std::string> cache_log;    // JSON lines
  std::vector<std::string> scale_log;    // JSON lines
  int64_t cache_audit_checks = 0;
  // Drain bookkeeping for the exact-deprovision check: (replica, drained_at,
  // outstanding work when deprovisioned — always 0).
  std::vector<std::string> drain_log;
};

SimResult run_simulation(const WorkloadSpec& workload, const ClusterConfig& cluster,
                         const PolicyConfig& policy, const SimOptions& options);

}  // namespace pythia::sim
