// SPDX-License-Identifier: Apache-2.0

#include "pythia/sched/priority.hpp"

#include <algorithm>

namespace pythia::sched {

double expected_remaining_distance(const workflow::PathCursor& position) {
  return std::max(1.0, workflow::expected_remaining_invocations(position));
}

double downstream_idle_risk(const std::map<std::string, int64_t>& model_queue_depths,
                            const std::map<std::string, std::string>& role_to_model,
                            const workflow::PathCursor& position, int64_t idle_threshold) {
  double risk = 0.0;
  for (const auto& role : workflow::future_roles(position)) {
    auto model_it = role_to_model.find(role);
    if (model_it == role_to_model.end()) continue;
    auto depth_it = model_queue_depths.find(model_it->second);
    int64_t depth = depth_it == model_queue_depths.end() ? 0 : depth_it->second;
    if (depth >= idle_threshold) continue;
    auto dist = workflow::expected_distance_to(position, role);
    if (!dist || *dist <= 0.0) continue;
    risk += 1.0 / *dist;
  }
  return risk;
}

PriorityScore set_priority(workflow::RequestEnvelope& req,
                           const std::map<std::string, int64_t>& model_queue_depths,
                           const std::map<std::string, std::string>& role_to_model,
                           const PriorityWeights& weights) {
  PriorityScore score;
  if (req.unprofiled() || !req.position) {
    req.base_priority = 0.0;
    return score;
  }
  score.s_completion = 1.0 / expected_remaining_distance(*req.position);
  score.s_unblock = downstream_idle_risk(model_queue_depths, role_to_model, *req.position,
                                         weights.idle_threshold);
  score.base_priority = weights.omega1 * score.s_completion + weights.omega2 * score.s_unblock;
  req.base_priority = score.base_priority;
  return score;
}

}  // namespace pythia::sched
