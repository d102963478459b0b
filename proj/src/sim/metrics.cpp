// SPDX-License-Identifier: Apache-2.0

#include "pythia/sim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pythia::sim {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double p95_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  size_t rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(v.size())));
  return v[std::min(rank == 0 ? 0 : rank - 1, v.size() - 1)];
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json series = nlohmann::json::object();
  for (const auto& [model, pts] : queue_depth_series) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [t, d] : pts) arr.push_back({t, d});
    series[model] = arr;
  }
  return {{"policy", policy},
          {"seed", seed},
          {"workload_id", workload_id},
          {"workflows_completed", workflows_completed},
          {"makespan_s", makespan},
          {"jct_samples", jct_samples},
          {"mean_jct_s", mean_jct},
          {"p95_jct_s", p95_jct},
          {"throughput_tokens_per_s", throughput_tokens_per_s},
          {"mean_ttft_s", mean_ttft},
          {"mean_queue_delay_s", mean_queue_delay},
          {"total_output_tokens", total_output_tokens},
          {"total_prompt_tokens", total_prompt_tokens},
          {"reused_tokens", {{"l1", reused_l1}, {"l2", reused_l2}, {"l3", reused_l3}}},
          {"hit_ratio", {{"l1", hit_ratio_l1}, {"l2", hit_ratio_l2}, {"l3", hit_ratio_l3}}},
          {"preemptions", preemptions},
          {"oom_events", oom_events},
          {"routing_decisions", routing_decisions},
          {"cache_tiebreaks", cache_tiebreaks},
          {"scale_ups", scale_ups},
          {"scale_downs", scale_downs},
          {"staged_tokens_l2", staged_tokens_l2},
          {"queue_depth_series", series},
          {"mean_queue_depth", mean_queue_depth}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& doc) {
  MetricsReport r;
  r.policy = doc.value("policy", "");
  r.seed = doc.value("seed", uint64_t{0});
  r.workload_id = doc.value("workload_id", "");
  r.workflows_completed = doc.value("workflows_completed", int64_t{0});
  r.makespan = doc.value("makespan_s", 0.0);
  if (doc.contains("jct_samples")) r.jct_samples = doc.at("jct_samples").get<std::vector<double>>();
  r.mean_jct = doc.value("mean_jct_s", 0.0);
  r.p95_jct = doc.value("p95_jct_s", 0.0);
  r.throughput_tokens_per_s = doc.value("throughput_tokens_per_s", 0.0);
  r.mean_ttft = doc.value("mean_ttft_s", 0.0);
  r.mean_queue_delay = doc.value("mean_queue_delay_s", 0.0);
  r.total_output_tokens = doc.value("total_output_tokens", int64_t{0});
  r.total_prompt_tokens = doc.value("total_prompt_tokens", int64_t{0});
  if (doc.contains("reused_tokens")) {
    r.reused_l1 = doc.at("reused_tokens").value("l1", int64_t{0});
    r.reused_l2 = doc.at("reused_tokens").value("l2", int64_t{0});
    r.reused_l3 = doc.at("reused_tokens").value("l3", int64_t{0});
  }
  if (doc.contains("hit_ratio")) {
    r.hit_ratio_l1 = doc.at("hit_ratio").value("l1", 0.0);
    r.hit_ratio_l2 = doc.at("hit_ratio").value("l2", 0.0);
    r.hit_ratio_l3 = doc.at("hit_ratio").value("l3", 0.0);
  }
  r.preemptions = doc.value("preemptions", int64_t{0});
  r.oom_events = doc.value("oom_events", int64_t{0});
  r.routing_decisions = doc.value("routing_decisions", int64_t{0});
  r.cache_tiebreaks = doc.value("cache_tiebreaks", int64_t{0});
  r.scale_ups = doc.value("scale_ups", int64_t{0});
  r.scale_downs = doc.value("scale_downs", int64_t{0});
  r.staged_tokens_l2 = doc.value("staged_tokens_l2", int64_t{0});
  if (doc.contains("queue_depth_series")) {
    for (const auto& [model, arr] : doc.at("queue_depth_series").items()) {
      for (const auto& pt : arr) {
        r.queue_depth_series[model].emplace_back(pt.at(0).get<double>(), pt.at(1).get<double>());
      }
    }
  }
  if (doc.contains("mean_queue_depth")) {
    r.mean_queue_depth = doc.at("mean_queue_depth").get<std::map<std::string, double>>();
  }
  return r;
}

std::string MetricsReport::queue_depth_csv() const {
  std::ostringstream out;
  out << "model,time_s,queued\n";
  for (const auto& [model, pts] : queue_depth_series) {
    for (const auto& [t, d] : pts) out << model << ',' << t << ',' << d << '\n';
  }
  return out.str();
}

std::string MetricsReport::jct_csv() const {
  std::ostringstream out;
  out << "workflow_index,jct_s\n";
  for (size_t i = 0; i < jct_samples.size(); ++i) out << i << ',' << jct_samples[i] << '\n';
  return out.str();
}

}  // namespace pythia::sim
