// SPDX-License-Identifier: Apache-2.0

#include "pythia/sim/config.hpp"

#include <fstream>

namespace pythia::sim {

namespace {

const nlohmann::json& require(const nlohmann::json& doc, const char* key,
                              const char* where) {
  if (!doc.contains(key)) {
    throw ConfigError(std::string(where) + ": missing required key \"" + key + "\"");
  }
  return doc.at(key);
}

}  // namespace

PolicyConfig PolicyConfig::preset(const std::string& name) {
  PolicyConfig cfg;
  cfg.name = name;
  if (name == "pythia") return cfg;
  if (name == "fcfs") {
    cfg.annotate = false;
    cfg.cache_speculative = false;
    cfg.routing_statistical = false;
    cfg.priority_graph = false;
    cfg.autoscaling = false;
    return cfg;
  }
  if (name == "lru_only") {  // full stack minus the speculative cache
    cfg.cache_speculative = false;
    return cfg;
  }
  if (name == "static_scale") {  // full stack minus phase-adaptive autoscaling
    cfg.autoscaling = false;
    return cfg;
  }
  throw ConfigError("unknown policy preset: " + name +
                    " (expected pythia|fcfs|lru_only|static_scale)");
}

WorkloadSpec workload_from_json(const nlohmann::json& doc) {
  WorkloadSpec spec;
  for (const auto& tj : require(doc, "workflow_types", "workload")) {
    WorkflowTypeSpec t;
    t.workflow_type_id = require(tj, "workflow_type_id", "workflow_type").get<std::string>();
    t.path_expr = require(tj, "path_expr", "workflow_type").get<std::string>();
    t.task_prompt_tokens = tj.value("task_prompt_tokens", int64_t{64});
    t.sibling_salt_tokens = tj.value("sibling_salt_tokens", int64_t{8});
    t.weight = tj.value("weight", 1.0);
    for (const auto& rj : require(tj, "roles", "workflow_type")) {
      RoleSpec r;
      r.role_id = require(rj, "role_id", "role").get<std::string>();
      r.model_id = require(rj, "model_id", "role").get<std::string>();
      r.mean_len = require(rj, "mean_len", "role").get<double>();
      r.cv = rj.value("cv", 0.3);
      r.tool_delay_mean = rj.value("tool_delay_mean", 0.0);
      r.tool_delay_cv = rj.value("tool_delay_cv", 1.0);
      r.sys_prompt_tokens = rj.value("sys_prompt_tokens", int64_t{32});
      r.carry_tokens = rj.value("carry_tokens", int64_t{1024});
      r.chat_accumulate = rj.value("chat_accumulate", false);
      t.roles[r.role_id] = std::move(r);
    }
    spec.types.push_back(std::move(t));
  }
  if (doc.contains("arrivals")) {
    const auto& aj = doc.at("arrivals");
    spec.arrivals.mode = aj.value("mode", std::string("open"));
    if (spec.arrivals.mode != "open" && spec.arrivals.mode != "closed") {
      throw ConfigError("arrivals.mode must be open|closed");
    }
    spec.arrivals.rate = aj.value("rate", 1.0);
    spec.arrivals.cv = aj.value("cv", 1.0);
    spec.arrivals.batch_size = aj.value("batch_size", 1);
    spec.arrivals.concurrency_cap = aj.value("concurrency_cap", 64);
    spec.arrivals.total_workflows = aj.value("total_workflows", 64);
  }
  spec.warmup_workflows = doc.value("warmup_workflows", 200);
  return spec;
}

ClusterConfig cluster_from_json(const nlohmann::json& doc) {
  ClusterConfig cfg;
  for (const auto& mj : require(doc, "models", "cluster")) {
    ModelSpec m;
    m.model_id = require(mj, "model_id", "model").get<std::string>();
    m.kv_capacity = require(mj, "kv_capacity", "model").get<int64_t>();
    m.l2_capacity = mj.value("l2_capacity", int64_t{400000});
    m.prefill_rate = mj.value("prefill_rate", 5000.0);
    m.decode_rate_base = mj.value("decode_rate_base", 50.0);
    m.batch_penalty = mj.value("batch_penalty", 0.05);
    m.pcie_rate = mj.value("pcie_rate", 20000.0);
    m.l3_fetch_rate = mj.value("l3_fetch_rate", 5000.0);
    m.max_batch = mj.value("max_batch", 64);
    m.initial_replicas = mj.value("initial_replicas", 1);
    m.slot_cost = mj.value("slot_cost", 1);
    cfg.models.push_back(std::move(m));
  }
  cfg.gpu_budget = doc.value("gpu_budget", int64_t{8});
  cfg.model_load_s = doc.value("model_load_s", 30.0);
  return cfg;
}

PolicyConfig policy_from_json(const nlohmann::json& doc) {
  PolicyConfig cfg;
  if (doc.contains("preset")) cfg = PolicyConfig::preset(doc.at("preset").get<std::string>());
  cfg.name = doc.value("name", cfg.name);
  cfg.annotate = doc.value("annotate", cfg.annotate);
  cfg.cache_speculative = doc.value("cache_speculative", cfg.cache_speculative);
  cfg.routing_statistical = doc.value("routing_statistical", cfg.routing_statistical);
  cfg.priority_graph = doc.value("priority_graph", cfg.priority_graph);
  cfg.autoscaling = doc.value("autoscaling", cfg.autoscaling);
  cfg.epsilon = doc.value("epsilon", cfg.epsilon);
  cfg.omega1 = doc.value("omega1", cfg.omega1);
  cfg.omega2 = doc.value("omega2", cfg.omega2);
  cfg.idle_threshold = doc.value("idle_threshold", cfg.idle_threshold);
  cfg.window_ms = doc.value("window_ms", cfg.window_ms);
  cfg.aging_rate = doc.value("aging_rate", cfg.aging_rate);
  cfg.horizon_steps = doc.value("horizon_steps", cfg.horizon_steps);
  cfg.eval_period_s = doc.value("eval_period_s", cfg.eval_period_s);
  cfg.prefetch_trigger_frac = doc.value("prefetch_trigger_frac", cfg.prefetch_trigger_frac);
  cfg.global_max_output = doc.value("global_max_output", cfg.global_max_output);
  cfg.prune_theta = doc.value("prune_theta", cfg.prune_theta);
  cfg.confidence = doc.value("confidence", cfg.confidence);
  return cfg;
}

nlohmann::json workload_to_json(const WorkloadSpec& spec) {
  nlohmann::json types = nlohmann::json::array();
  for (const auto& t : spec.types) {
    nlohmann::json roles = nlohmann::json::array();
    for (const auto& [id, r] : t.roles) {
      (void)id;
      roles.push_back({{"role_id", r.role_id},
                       {"model_id", r.model_id},
                       {"mean_len", r.mean_len},
                       {"cv", r.cv},
                       {"tool_delay_mean", r.tool_delay_mean},
                       {"tool_delay_cv", r.tool_delay_cv},
                       {"sys_prompt_tokens", r.sys_prompt_tokens},
                       {"carry_tokens", r.carry_tokens},
                       {"chat_accumulate", r.chat_accumulate}});
    }
    types.push_back({{"workflow_type_id", t.workflow_type_id},
                     {"path_expr", t.path_expr},
                     {"task_prompt_tokens", t.task_prompt_tokens},
                     {"sibling_salt_tokens", t.sibling_salt_tokens},
                     {"weight", t.weight},
                     {"roles", roles}});
  }
  return {{"workflow_types", types},
          {"arrivals",
           {{"mode", spec.arrivals.mode},
            {"rate", spec.arrivals.rate},
            {"cv", spec.arrivals.cv},
            {"batch_size", spec.arrivals.batch_size},
            {"concurrency_cap", spec.arrivals.concurrency_cap},
            {"total_workflows", spec.arrivals.total_workflows}}},
          {"warmup_workflows", spec.warmup_workflows}};
}

nlohmann::json cluster_to_json(const ClusterConfig& cfg) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : cfg.models) {
    models.push_back({{"model_id", m.model_id},
                      {"kv_capacity", m.kv_capacity},
                      {"l2_capacity", m.l2_capacity},
                      {"prefill_rate", m.prefill_rate},
                      {"decode_rate_base", m.decode_rate_base},
                      {"batch_penalty", m.batch_penalty},
                      {"pcie_rate", m.pcie_rate},
                      {"l3_fetch_rate", m.l3_fetch_rate},
                      {"max_batch", m.max_batch},
                      {"initial_replicas", m.initial_replicas},
                      {"slot_cost", m.slot_cost}});
  }
  return {{"models", models}, {"gpu_budget", cfg.gpu_budget}, {"model_load_s", cfg.model_load_s}};
}

nlohmann::json policy_to_json(const PolicyConfig& cfg) {
  return {{"name", cfg.name},
          {"annotate", cfg.annotate},
          {"cache_speculative", cfg.cache_speculative},
          {"routing_statistical", cfg.routing_statistical},
          {"priority_graph", cfg.priority_graph},
          {"autoscaling", cfg.autoscaling},
          {"epsilon", cfg.epsilon},
          {"omega1", cfg.omega1},
          {"omega2", cfg.omega2},
          {"idle_threshold", cfg.idle_threshold},
          {"window_ms", cfg.window_ms},
          {"aging_rate", cfg.aging_rate},
          {"horizon_steps", cfg.horizon_steps},
          {"eval_period_s", cfg.eval_period_s},
          {"prefetch_trigger_frac", cfg.prefetch_trigger_frac},
          {"global_max_output", cfg.global_max_output},
          {"prune_theta", cfg.prune_theta},
          {"confidence", cfg.confidence}};
}

namespace {

nlohmann::json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string(what) + ": cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw ConfigError(std::string(what) + ": invalid JSON in " + path + ": " + e.what());
  }
  return doc;
}

}  // namespace

WorkloadSpec load_workload(const std::string& path) {
  return workload_from_json(read_json_file(path, "workload"));
}

ClusterConfig load_cluster(const std::string& path) {
  return cluster_from_json(read_json_file(path, "cluster"));
}

WorkloadSpec coding_assistant_workload() {
  WorkloadSpec spec;
  WorkflowTypeSpec t;
  t.workflow_type_id = "coding_assistant";
  t.path_expr =
      "planner -> (explorer)^{||3,4} -> chronicler -> architect -> (engineer)^{3,6} -> "
      "reviewer -> (engineer^{2-4} -> reviewer)? -> verifier -> terminal";
  t.task_prompt_tokens = 128;

  auto role = [&](const std::string& id, const std::string& model, double mean, double cv,
                  double tool_mean, bool accumulate) {
    RoleSpec r;
    r.role_id = id;
    r.model_id = model;
    r.mean_len = mean;
    r.cv = cv;
    r.tool_delay_mean = tool_mean;
    r.chat_accumulate = accumulate;
    t.roles[id] = r;
  };
  role("planner", "reasoning_model", 60.0, 0.15, 0.5, false);
  role("explorer", "explore_model", 1924.0, 0.45, 5.0, false);
  role("chronicler", "reasoning_model", 912.0, 0.26, 1.0, false);
  role("architect", "reasoning_model", 1194.0, 0.22, 1.0, false);
  role("engineer", "code_model", 3152.0, 0.45, 10.0, true);
  role("reviewer", "reasoning_model", 2620.0, 0.18, 1.0, false);
  role("verifier", "reasoning_model", 65.0, 0.16, 0.5, false);

  spec.types.push_back(std::move(t));
  spec.arrivals.mode = "open";
  spec.arrivals.rate = 0.03;
  spec.arrivals.cv = 1.0;
  spec.arrivals.concurrency_cap = 64;
  spec.arrivals.total_workflows = 64;
  return spec;
}

ClusterConfig coding_assistant_cluster() {
  ClusterConfig cfg;
  auto model = [&](const std::string& id, int replicas, int64_t kv) {
    ModelSpec m;
    m.model_id = id;
    m.kv_capacity = kv;
    m.l2_capacity = 2 * kv;
    // Decode throughput saturates around a dozen concurrent requests, so
    // packing far past the reservation level buys little.
    m.batch_penalty = 0.4;
    m.max_batch = 16;
    m.initial_replicas = replicas;
    cfg.models.push_back(m);
  };
  // A plausible operator guess that underweights the shared reasoning model;
  // the adaptive policies earn their keep against exactly this kind of
  // static misallocation.
  model("reasoning_model", 1, 40000);
  model("explore_model", 3, 40000);
  model("code_model", 4, 100000);
  cfg.gpu_budget = 8;
  return cfg;
}

}  // namespace pythia::sim
