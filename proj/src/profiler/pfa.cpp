// SPDX-License-Identifier: Apache-2.0

#include "pythia/profiler/pfa.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>

namespace pythia::profiler {

std::set<std::string> Pfa::states() const {
  std::set<std::string> s;
  for (const auto& [edge, count] : transition_counts) {
    (void)count;
    s.insert(edge.first);
    s.insert(edge.second);
  }
  return s;
}

int64_t Pfa::out_total(const std::string& state) const {
  int64_t total = 0;
  for (const auto& [edge, count] : transition_counts) {
    if (edge.first == state) total += count;
  }
  return total;
}

double Pfa::probability(const std::string& from, const std::string& to) const {
  int64_t total = out_total(from);
  if (total == 0) return 0.0;
  auto it = transition_counts.find({from, to});
  return it == transition_counts.end() ? 0.0
                                       : static_cast<double>(it->second) / static_cast<double>(total);
}

std::vector<MacroStep> collapse_fanout_groups(const std::vector<TraceRecord>& records) {
  std::vector<MacroStep> steps;
  size_t i = 0;
  while (i < records.size()) {
    MacroStep step;
    step.role_id = records[i].role_id;
    step.members.push_back(&records[i]);
    double lo = records[i].start_time, hi = records[i].end_time;
    size_t j = i + 1;
    while (j < records.size() && records[j].role_id == step.role_id &&
           records[j].parent_step.has_value() && records[i].parent_step.has_value() &&
           *records[j].parent_step == *records[i].parent_step &&
           records[j].start_time < hi && records[j].end_time > lo) {
      lo = std::max(lo, records[j].start_time);
      hi = std::min(hi, records[j].end_time);
      step.members.push_back(&records[j]);
      ++j;
    }
    step.group_size = static_cast<int>(step.members.size());
    steps.push_back(std::move(step));
    i = j;
  }
  return steps;
}

void ingest_into_pfa(Pfa& pfa, const std::vector<TraceRecord>& records) {
  if (records.empty()) throw std::invalid_argument("empty trace");
  for (size_t i = 1; i < records.size(); ++i) {
    if (records[i].workflow_id != records[0].workflow_id) {
      throw std::invalid_argument("trace mixes workflow ids");
    }
    if (records[i].step_index <= records[i - 1].step_index) {
      throw std::invalid_argument("trace records not sorted by step_index");
    }
  }
  auto steps = collapse_fanout_groups(records);
  std::string prev = kStart;
  for (const auto& step : steps) {
    pfa.transition_counts[{prev, step.role_id}] += 1;
    prev = step.role_id;
    if (step.group_size >= 2) pfa.fanout_sizes[step.role_id].push_back(step.group_size);
  }
  pfa.transition_counts[{prev, kTerminal}] += 1;

  // Consecutive identical macro-steps form a repetition run.
  size_t i = 0;
  while (i < steps.size()) {
    size_t j = i;
    while (j < steps.size() && steps[j].role_id == steps[i].role_id) ++j;
    pfa.repetition_runs[steps[i].role_id].push_back(static_cast<int>(j - i));
    i = j;
  }

  std::map<std::string, int> visits;
  for (const auto& step : steps) visits[step.role_id] += 1;
  for (const auto& [role, n] : visits) pfa.visit_counts[role].push_back(n);
}

namespace {

std::set<std::string> reachable_from_start(
    const std::map<std::pair<std::string, std::string>, int64_t>& edges) {
  std::set<std::string> seen{kStart};
  std::queue<std::string> queue;
  queue.push(kStart);
  while (!queue.empty()) {
    std::string cur = queue.front();
    queue.pop();
    for (const auto& [edge, count] : edges) {
      (void)count;
      if (edge.first == cur && !seen.count(edge.second)) {
        seen.insert(edge.second);
        queue.push(edge.second);
      }
    }
  }
  return seen;
}

void drop_unreachable(std::map<std::pair<std::string, std::string>, int64_t>& edges) {
  for (;;) {
    auto reach = reachable_from_start(edges);
    bool changed = false;
    for (auto it = edges.begin(); it != edges.end();) {
      if (!reach.count(it->first.first)) {
        it = edges.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
    if (!changed) return;
  }
}

}  // namespace

Pfa filter_pfa(const Pfa& pfa, double theta) {
  if (theta < 0.0 || theta >= 1.0) throw std::invalid_argument("theta must lie in [0,1)");
  Pfa out = pfa;
  if (theta == 0.0) return out;

  struct Removed {
    double prob;
    std::pair<std::string, std::string> edge;
    int64_t count;
  };
  std::vector<Removed> removed;
  for (auto it = out.transition_counts.begin(); it != out.transition_counts.end();) {
    double p = pfa.probability(it->first.first, it->first.second);
    if (p < theta) {
      removed.push_back({p, it->first, it->second});
      it = out.transition_counts.erase(it);
    } else {
      ++it;
    }
  }

  auto connected = [&] {
    return reachable_from_start(out.transition_counts).count(kTerminal) > 0;
  };
  if (!connected()) {
    std::sort(removed.begin(), removed.end(), [](const Removed& a, const Removed& b) {
      if (a.prob != b.prob) return a.prob > b.prob;
      return a.edge < b.edge;
    });
    for (const auto& r : removed) {
      out.transition_counts[r.edge] = r.count;
      out.degraded_filter = true;
      if (connected()) break;
    }
  }
  drop_unreachable(out.transition_counts);
  return out;
}

}  // namespace pythia::profiler
