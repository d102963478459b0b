// SPDX-License-Identifier: Apache-2.0

#include "pythia/scale/autoscaler.hpp"

#include <algorithm>
#include <cmath>

namespace pythia::scale {

std::map<std::string, double> project_graph(const workflow::PathCursor& position, int horizon) {
  return workflow::project_horizon(position, horizon);
}

DemandMap estimate_imminent_demand(const std::vector<ActiveRequestView>& requests, int horizon,
                                   const std::map<std::string, RoleLoadModel>& roles) {
  DemandMap demand;
  auto add = [&](const std::string& role, double invocations) {
    auto it = roles.find(role);
    if (it == roles.end()) return;
    demand[it->second.model_id] +=
        invocations * (it->second.mean_prompt + it->second.mean_output);
  };
  for (const auto& req : requests) {
    if (req.waiting) {
      // A queued request's own step is the imminent demand; its later steps
      // are gated behind it and would only inflate downstream models while
      // the bottleneck starves.
      add(req.role, 1.0);
      continue;
    }
    if (!req.position) continue;
    for (const auto& [role, count] : project_graph(*req.position, horizon)) {
      add(role, count);
    }
  }
  return demand;
}

int64_t estimate_replicas(double demand_tokens, double per_replica_capacity,
                          double service_factor) {
  if (per_replica_capacity <= 0.0) throw std::invalid_argument("per_replica_capacity <= 0");
  if (demand_tokens <= 0.0) return 0;
  return static_cast<int64_t>(
      std::ceil(demand_tokens / (per_replica_capacity * std::max(service_factor, 1e-9))));
}

ScalePlan autoscale_cluster(const DemandMap& demand, const std::vector<ModelScaleState>& models,
                            int64_t gpu_budget, int64_t occupied_slots) {
  ScalePlan plan;
  int64_t free_slots = gpu_budget - occupied_slots;
  int64_t freed = 0;

  struct Raw {
    const ModelScaleState* model;
    double demand;
    int64_t want;
    int64_t target = 0;
  };
  std::vector<Raw> raws;
  int64_t want_slots = 0;
  for (const auto& m : models) {
    auto dit = demand.find(m.model_id);
    double d = dit == demand.end() ? 0.0 : dit->second;
    int64_t want = estimate_replicas(d, m.per_replica_capacity, m.service_factor);
    raws.push_back({&m, d, want});
    want_slots += want * m.slot_cost;
  }

  if (want_slots <= gpu_budget) {
    for (auto& r : raws) r.target = r.want;
  } else {
    // Contended budget: every model with demand keeps a foothold, the rest
    // splits roughly proportionally. A pure highest-demand-wins allocation
    // can starve a cheap upstream stage forever and wedge the whole pipeline.
    std::vector<size_t> order(raws.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (raws[a].demand != raws[b].demand) return raws[a].demand > raws[b].demand;
      return raws[a].model->model_id < raws[b].model->model_id;
    });
    int64_t left = gpu_budget;
    for (size_t i : order) {
      if (raws[i].want >= 1 && left >= raws[i].model->slot_cost) {
        raws[i].target = 1;
        left -= raws[i].model->slot_cost;
      }
    }
    for (;;) {
      size_t best = raws.size();
      double best_score = -1.0;
      for (size_t i = 0; i < raws.size(); ++i) {
        if (raws[i].target >= raws[i].want) continue;
        if (raws[i].model->slot_cost > left) continue;
        double score = raws[i].demand / static_cast<double>(raws[i].target + 1);
        if (score > best_score ||
            (score == best_score && raws[i].model->model_id < raws[best].model->model_id)) {
          best = i;
          best_score = score;
        }
      }
      if (best == raws.size()) break;
      raws[best].target += 1;
      left -= raws[best].model->slot_cost;
    }
  }

  struct Want {
    std::string model_id;
    int64_t count;
    int64_t slot_cost;
    double demand;
  };
  std::vector<Want> ups;
  for (const auto& r : raws) {
    plan.targets[r.model->model_id] = r.target;
    if (r.target < r.model->current_replicas) {
      plan.scale_down.push_back({r.model->model_id, r.model->current_replicas - r.target});
      freed += (r.model->current_replicas - r.target) * r.model->slot_cost;
    } else if (r.target > r.model->current_replicas) {
      ups.push_back({r.model->model_id, r.target - r.model->current_replicas,
                     r.model->slot_cost, r.demand});
    }
  }

  // Highest projected demand wins the contested slots; the rest is deferred
  // to the next evaluation.
  std::sort(ups.begin(), ups.end(), [](const Want& a, const Want& b) {
    if (a.demand != b.demand) return a.demand > b.demand;
    return a.model_id < b.model_id;
  });
  int64_t available = free_slots + freed;
  for (const auto& want : ups) {
    int64_t grantable = std::min(want.count, available / std::max<int64_t>(want.slot_cost, 1));
    if (grantable <= 0) continue;
    plan.scale_up.push_back({want.model_id, grantable});
    available -= grantable * want.slot_cost;
  }
  return plan;
}

}  // namespace pythia::scale
