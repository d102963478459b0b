// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pythia/workflow/path_analysis.hpp"

namespace pythia::scale {

// Projected token demand per model over the lookahead horizon.
using DemandMap = std::map<std::string, double>;

// One annotated, incomplete request as the autoscaler sees it.
struct ActiveRequestView {
  std::optional<workflow::PathCursor> position;
  std::string role;
  bool waiting = false;  // not yet in service: its own step is imminent demand
};

struct RoleLoadModel {
  std::string model_id;
  double mean_prompt = 0.0;
  double mean_output = 0.0;
};

// Expected invocations of each role within the next `horizon` wall steps of
// the request's expression. Exposed for tests; estimate_imminent_demand sums
// it over all active requests.
std::map<std::string, double> project_graph(const workflow::PathCursor& position, int horizon);

// Token-demand forecast: running requests contribute their projected future
// steps (expected invocations x mean prompt+output per role); waiting
// requests contribute exactly their own pending step, since anything past it
// is gated behind the queue. Unprofiled requests contribute nothing; they
// are served reactively.
DemandMap estimate_imminent_demand(const std::vector<ActiveRequestView>& requests, int horizon,
                                   const std::map<std::string, RoleLoadModel>& roles);

// ceil(demand / (capacity * service_factor)), minimum 0. service_factor is
// the expected request turnovers per horizon.
int64_t estimate_replicas(double demand_tokens, double per_replica_capacity,
                          double service_factor);

struct ModelScaleState {
  std::string model_id;
  int64_t current_replicas = 0;  // serving or loading (draining excluded)
  double per_replica_capacity = 0.0;
  double service_factor = 1.0;
  int64_t slot_cost = 1;
};

struct ScalePlan {
  struct Action {
    std::string model_id;
    int64_t count = 0;
  };
  std::vector<Action> scale_down;  // executed first: drain, deprovision on empty
  std::vector<Action> scale_up;    // demand-ordered; capped by the GPU budget
  std::map<std::string, int64_t> targets;
};

// Computes per-model replica targets and the ordered plan. Scale-ups beyond
// free-plus-freed slots are dropped (highest demand wins; the next evaluation
// re-plans). Deterministic for a given snapshot.
ScalePlan autoscale_cluster(const DemandMap& demand, const std::vector<ModelScaleState>& models,
                            int64_t gpu_budget, int64_t occupied_slots);

}  // namespace pythia::scale
