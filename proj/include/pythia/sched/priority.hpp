// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "pythia/workflow/envelope.hpp"
#include "pythia/workflow/path_analysis.hpp"

namespace pythia::sched {

struct PriorityWeights {
  double omega1 = 1.0;
  double omega2 = 1.0;
  int64_t idle_threshold = 2;  // queue depth below which a model counts as idle-at-risk
};

struct PriorityScore {
  double s_completion = 0.0;
  double s_unblock = 0.0;
  double base_priority = 0.0;
};

// E[D_remain]: expected invocations until the workflow's terminal, counting
// the current one; floored at 1 by the counting convention.
double expected_remaining_distance(const workflow::PathCursor& position);

// Sum of 1/E[D_a] over future agents whose backing model's cluster queue
// depth is under the idle threshold. E[D_a] is the expected invocation
// distance to the agent's first future occurrence; unreachable agents
// contribute nothing.
double downstream_idle_risk(const std::map<std::string, int64_t>& model_queue_depths,
                            const std::map<std::string, std::string>& role_to_model,
                            const workflow::PathCursor& position, int64_t idle_threshold);

// Computes and stores the request's base priority before routing.
// Unprofiled requests get base_priority 0.
PriorityScore set_priority(workflow::RequestEnvelope& req,
                           const std::map<std::string, int64_t>& model_queue_depths,
                           const std::map<std::string, std::string>& role_to_model,
                           const PriorityWeights& weights);

}  // namespace pythia::sched
