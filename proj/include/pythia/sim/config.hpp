// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace pythia::sim {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One agent role of a synthetic workflow: backing model, output-length law,
// tool delay after completion, and prompt-composition knobs.
struct RoleSpec {
  std::string role_id;
  std::string model_id;
  double mean_len = 500.0;
  double cv = 0.3;
  double tool_delay_mean = 0.0;
  double tool_delay_cv = 1.0;
  int64_t sys_prompt_tokens = 32;
  int64_t carry_tokens = 1024;   // slice of the predecessor response carried forward
  bool chat_accumulate = false;  // consecutive same-role calls extend the full context
};

struct WorkflowTypeSpec {
  std::string workflow_type_id;
  std::string path_expr;  // ground-truth structure
  std::map<std::string, RoleSpec> roles;
  int64_t task_prompt_tokens = 64;   // per-workflow unique task text on the first step
  int64_t sibling_salt_tokens = 8;   // per-sibling unique suffix
  double weight = 1.0;               // relative arrival share
};

struct ArrivalSpec {
  std::string mode = "open";  // "open" (rate-driven) or "closed" (fixed concurrency)
  double rate = 1.0;          // workflows per second, open mode
  double cv = 1.0;            // interarrival CV knob: 0 stable, 1 Poisson-like, >1 bursty
  int batch_size = 1;         // >1: batch-cron simultaneous releases
  int concurrency_cap = 64;
  int total_workflows = 64;
};

struct WorkloadSpec {
  std::vector<WorkflowTypeSpec> types;
  ArrivalSpec arrivals;
  int warmup_workflows = 200;  // profiler shadow-training batch per type
};

struct ModelSpec {
  std::string model_id;
  int64_t kv_capacity = 200000;
  int64_t l2_capacity = 400000;
  double prefill_rate = 5000.0;      // tokens/s
  double decode_rate_base = 50.0;    // tokens/s per request
  double batch_penalty = 0.05;       // fractional slowdown per concurrent decode
  double pcie_rate = 20000.0;        // L2 -> L1 tokens/s
  double l3_fetch_rate = 5000.0;     // L3 -> L2 tokens/s
  int max_batch = 64;                // engine cap on concurrently running requests
  int initial_replicas = 1;
  int slot_cost = 1;
};

struct ClusterConfig {
  std::vector<ModelSpec> models;
  int64_t gpu_budget = 8;
  double model_load_s = 30.0;
};

struct PolicyConfig {
  std::string name = "pythia";
  bool annotate = true;
  bool cache_speculative = true;
  bool routing_statistical = true;
  bool priority_graph = true;
  bool autoscaling = true;

  double epsilon = 0.05;
  double omega1 = 1.0;
  double omega2 = 1.0;
  int64_t idle_threshold = 2;
  double window_ms = 50.0;
  double aging_rate = 0.02;
  int horizon_steps = 2;
  double eval_period_s = 1.0;
  double prefetch_trigger_frac = 0.5;
  int64_t global_max_output = 16384;

  double prune_theta = 0.05;
  double confidence = 0.99;

  static PolicyConfig preset(const std::string& name);
};

// JSON loaders validate required keys and name the missing one.
WorkloadSpec workload_from_json(const nlohmann::json& doc);
ClusterConfig cluster_from_json(const nlohmann::json& doc);
PolicyConfig policy_from_json(const nlohmann::json& doc);
nlohmann::json workload_to_json(const WorkloadSpec& spec);
nlohmann::json cluster_to_json(const ClusterConfig& cfg);
nlohmann::json policy_to_json(const PolicyConfig& cfg);

WorkloadSpec load_workload(const std::string& path);
ClusterConfig load_cluster(const std::string& path);

// Built-in specs used by tests and as ready-made experiment inputs.
WorkloadSpec coding_assistant_workload();
ClusterConfig coding_assistant_cluster();

}  // namespace pythia::sim
