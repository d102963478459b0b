// SPDX-License-Identifier: Apache-2.0

#include "pythia/sched/router.hpp"

namespace pythia::sched {

bool capacity_holds(const NodeView& node, const Reservation& req) {
  int64_t total = req.tokens();
  for (const auto& r : node.assigned) total += r.tokens();
  return total <= node.kv_capacity;
}

double oom_bound(const NodeView& node, const Reservation& req) {
  double sum = req.alpha;
  for (const auto& r : node.assigned) sum += r.alpha;
  return sum;
}

RoutingDecision route(const std::vector<NodeView>& nodes, const Reservation& req,
                      double epsilon) {
  RoutingDecision decision;
  const NodeView* best = nullptr;
  int64_t best_headroom = 0;
  for (const auto& node : nodes) {
    if (!capacity_holds(node, req)) continue;
    double bound = oom_bound(node, req);
    if (bound > epsilon) continue;
    int64_t reserved = req.tokens();
    for (const auto& r : node.assigned) reserved += r.tokens();
    int64_t headroom = node.kv_capacity - reserved;
    if (!best || headroom > best_headroom ||
        (headroom == best_headroom && node.staged_l2_prefix > best->staged_l2_prefix) ||
        (headroom == best_headroom && node.staged_l2_prefix == best->staged_l2_prefix &&
         node.replica_id < best->replica_id)) {
      if (best && headroom == best_headroom && node.staged_l2_prefix > best->staged_l2_prefix) {
        decision.cache_tiebreak_used = true;
      } else if (!best || headroom > best_headroom) {
        decision.cache_tiebreak_used = false;
      }
      best = &node;
      best_headroom = headroom;
    }
  }
  if (best) {
    decision.target = best->replica_id;
    decision.headroom = best_headroom;
    decision.oom_bound = oom_bound(*best, req);
  }
  return decision;
}

std::optional<int> route_least_outstanding(const std::vector<NodeView>& nodes) {
  const NodeView* best = nullptr;
  for (const auto& node : nodes) {
    if (!best || node.assigned.size() < best->assigned.size() ||
        (node.assigned.size() == best->assigned.size() && node.replica_id < best->replica_id)) {
      best = &node;
    }
  }
  if (!best) return std::nullopt;
  return best->replica_id;
}

}  // namespace pythia::sched
