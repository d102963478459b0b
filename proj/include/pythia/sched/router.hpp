// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pythia::sched {

// One request's KV reservation on a node: prompt plus the high-confidence
// output bound, grown to the actual footprint once a tail generation has
// already exceeded the bound.
struct Reservation {
  int64_t prompt_len = 0;
  int64_t upper = 0;            // u_i (the global cap for unprofiled requests)
  double alpha = 0.0;           // P(actual > upper)
  int64_t tokens_generated = 0;

  int64_t tokens() const { return prompt_len + std::max(upper, tokens_generated); }
};

struct NodeView {
  int replica_id = 0;
  int64_t kv_capacity = 0;
  std::vector<Reservation> assigned;  // queued + active on this node
  int64_t staged_l2_prefix = 0;       // staged L2 tokens for the candidate request's prompt
};

struct RoutingDecision {
  std::optional<int> target;  // nullopt: wait at the model-level ingress queue
  int64_t headroom = 0;       // capacity minus all reservations, request included
  double oom_bound = 0.0;
  bool cache_tiebreak_used = false;
};

// Strict distribution-free reservation: sum of reservations of the active
// set plus the candidate fits in the node's KV capacity.
bool capacity_holds(const NodeView& node, const Reservation& req);

// Union bound on the joint OOM probability of the node's set with the
// candidate added; only meaningful when capacity_holds.
double oom_bound(const NodeView& node, const Reservation& req);

// Picks the safe node with maximum headroom; staged L2 prefix breaks ties,
// then the lowest replica id. No safe node: the request waits.
RoutingDecision route(const std::vector<NodeView>& nodes, const Reservation& req, double epsilon);

// Reactive baseline: fewest assigned requests, ties to the lowest id.
std::optional<int> route_least_outstanding(const std::vector<NodeView>& nodes);

}  // namespace pythia::sched
