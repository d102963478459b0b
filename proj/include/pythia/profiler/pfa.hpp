// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "pythia/profiler/trace.hpp"

namespace pythia::profiler {

inline const std::string kStart = "__start__";
inline const std::string kTerminal = "__terminal__";

// Probabilistic finite automaton mined from execution traces. States are
// agent roles plus the START/TERMINAL sentinels; probabilities are derived
// from counts on demand, so filtering stays idempotent.
struct Pfa {
  std::map<std::pair<std::string, std::string>, int64_t> transition_counts;
  std::map<std::string, std::vector<int>> repetition_runs;  // consecutive-run lengths
  std::map<std::string, std::vector<int>> fanout_sizes;     // concurrent sibling-group sizes
  std::map<std::string, std::vector<int>> visit_counts;     // per-trace visits per role
  bool degraded_filter = false;  // a sub-threshold edge was restored to keep connectivity

  std::set<std::string> states() const;
  int64_t out_total(const std::string& state) const;
  double probability(const std::string& from, const std::string& to) const;

  friend bool operator==(const Pfa&, const Pfa&) = default;
};

// A workflow's records collapsed to macro-steps: concurrent same-role sibling
// groups (same parent_step, overlapping execution) count once, with their
// size recorded separately.
struct MacroStep {
  std::string role_id;
  int group_size = 1;
  std::vector<const TraceRecord*> members;
};
std::vector<MacroStep> collapse_fanout_groups(const std::vector<TraceRecord>& records);

// Folds one completed workflow into the automaton. Records must be sorted by
// step_index and share a single workflow_id; anything else throws
// std::invalid_argument.
void ingest_into_pfa(Pfa& pfa, const std::vector<TraceRecord>& records);

// Removes transitions with normalized probability < theta, then de-orphans
// states no longer reachable from START. If pruning disconnects TERMINAL,
// removed transitions are restored most-probable-first until connectivity
// holds and degraded_filter is set. theta = 0 is the identity.
Pfa filter_pfa(const Pfa& pfa, double theta);

}  // namespace pythia::profiler
