// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace pythia::sim {

struct MetricsReport {
  std::string policy;
  uint64_t seed = 0;
  std::string workload_id;

  int64_t workflows_completed = 0;
  double makespan = 0.0;  // first arrival to last completion
  std::vector<double> jct_samples;
  double mean_jct = 0.0;
  double p95_jct = 0.0;
  double throughput_tokens_per_s = 0.0;  // total generated tokens / makespan, exactly

  double mean_ttft = 0.0;
  double mean_queue_delay = 0.0;  // request creation to prefill start

  int64_t total_output_tokens = 0;
  int64_t total_prompt_tokens = 0;
  int64_t reused_l1 = 0, reused_l2 = 0, reused_l3 = 0;
  double hit_ratio_l1 = 0.0, hit_ratio_l2 = 0.0, hit_ratio_l3 = 0.0;

  int64_t preemptions = 0;
  int64_t oom_events = 0;
  int64_t routing_decisions = 0;
  int64_t cache_tiebreaks = 0;
  int64_t scale_ups = 0;
  int64_t scale_downs = 0;
  int64_t staged_tokens_l2 = 0;

  // model -> (time, queued requests) sampled each evaluation period
  std::map<std::string, std::vector<std::pair<double, double>>> queue_depth_series;
  std::map<std::string, double> mean_queue_depth;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& doc);

  // Plot-ready CSV: one row per (model, time, depth).
  std::string queue_depth_csv() const;
  std::string jct_csv() const;
};

double mean_of(const std::vector<double>& v);
double p95_of(std::vector<double> v);  // nearest-rank

}  // namespace pythia::sim
