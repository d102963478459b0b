// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pythia/sim/engine.hpp"

using namespace pythia::sim;

namespace {

WorkloadSpec linear_workload(int total, double mean_a = 100.0, double mean_b = 200.0) {
  WorkloadSpec spec;
  WorkflowTypeSpec t;
  t.workflow_type_id = "linear";
  t.path_expr = "a -> b -> terminal";
  t.task_prompt_tokens = 64;
  t.sibling_salt_tokens = 8;
  RoleSpec a;
  a.role_id = "a";
  a.model_id = "m";
  a.mean_len = mean_a;
  a.cv = 0.0;
  RoleSpec b = a;
  b.role_id = "b";
  b.mean_len = mean_b;
  t.roles["a"] = a;
  t.roles["b"] = b;
  spec.types.push_back(t);
  spec.arrivals.mode = "closed";
  spec.arrivals.concurrency_cap = 4;
  spec.arrivals.total_workflows = total;
  spec.warmup_workflows = 30;
  return spec;
}

ClusterConfig one_model_cluster(int replicas = 1, int64_t kv = 200000) {
  ClusterConfig cfg;
  ModelSpec m;
  m.model_id = "m";
  m.kv_capacity = kv;
  m.initial_replicas = replicas;
  cfg.models.push_back(m);
  cfg.gpu_budget = 8;
  return cfg;
}

}  // namespace

TEST_CASE("prefill_time composes compute and transfer charges") {
  ModelSpec m;  // defaults: prefill 5000, pcie 20000, l3 5000
  SUBCASE("full L1 hit costs nothing") {
    CHECK(prefill_time(1000, {1000, 0, 0}, m) == doctest::Approx(0.0));
  }
  SUBCASE("cold prefill is compute only") {
    CHECK(prefill_time(1000, {0, 0, 0}, m) == doctest::Approx(0.2));
  }
  SUBCASE("an 800-token L2 hit beats cold prefill") {
    double warm = prefill_time(1000, {0, 800, 0}, m);
    CHECK(warm == doctest::Approx(200.0 / 5000.0 + 800.0 / 20000.0));
    CHECK(warm < 0.2);
  }
  SUBCASE("L3 hits pay the shared-store fetch") {
    double t = prefill_time(1000, {0, 0, 1000}, m);
    CHECK(t == doctest::Approx(1000.0 / 5000.0));  // fetch 0.2 == compute 0.2 at defaults
  }
}

TEST_CASE("decode_interval applies the batch penalty") {
  ModelSpec m;
  m.decode_rate_base = 50.0;
  m.batch_penalty = 0.1;
  CHECK(decode_interval(m, 1) == doctest::Approx(1.0 / 50.0));
  CHECK(decode_interval(m, 2) == doctest::Approx(1.1 / 50.0));
}

TEST_CASE("single workflow on an idle replica has a closed-form JCT") {
  // Prompt: 32 system + 64 task + 8 salt = 104 tokens. Output fixed at 100.
  WorkloadSpec spec = linear_workload(1, 100.0, 200.0);
  spec.types[0].path_expr = "a -> terminal";
  spec.types[0].roles.erase("b");
  ClusterConfig cluster = one_model_cluster();
  PolicyConfig policy = PolicyConfig::preset("fcfs");
  SimOptions options;
  options.seed = 3;
  auto result = run_simulation(spec, cluster, policy, options);
  REQUIRE(result.metrics.workflows_completed == 1);
  double expected = 104.0 / 5000.0 + 100.0 * (1.0 / 50.0);
  CHECK(result.metrics.mean_jct == doctest::Approx(expected).epsilon(1e-9));
  CHECK(result.metrics.mean_ttft == doctest::Approx(104.0 / 5000.0).epsilon(1e-9));
}

TEST_CASE("token conservation: generated tokens equal the spec exactly") {
  WorkloadSpec spec = linear_workload(6);
  auto result = run_simulation(spec, one_model_cluster(2), PolicyConfig::preset("fcfs"), {.seed = 7});
  CHECK(result.metrics.workflows_completed == 6);
  CHECK(result.metrics.total_output_tokens == 6 * (100 + 200));
  CHECK(result.metrics.throughput_tokens_per_s * result.metrics.makespan ==
        doctest::Approx(static_cast<double>(result.metrics.total_output_tokens)));
}

TEST_CASE("identical seed and config replay byte-identically") {
  WorkloadSpec spec = linear_workload(8, 80.0, 120.0);
  spec.types[0].roles["a"].cv = 0.4;
  spec.types[0].roles["b"].cv = 0.4;
  spec.types[0].roles["b"].tool_delay_mean = 2.0;
  spec.arrivals.mode = "open";
  spec.arrivals.rate = 0.5;
  spec.arrivals.cv = 2.0;
  spec.arrivals.total_workflows = 8;
  ClusterConfig cluster = one_model_cluster(2, 20000);
  for (const char* preset : {"pythia", "fcfs"}) {
    PolicyConfig policy = PolicyConfig::preset(preset);
    auto r1 = run_simulation(spec, cluster, policy, {.seed = 11});
    auto r2 = run_simulation(spec, cluster, policy, {.seed = 11});
    CHECK(r1.metrics.to_json().dump() == r2.metrics.to_json().dump());
    auto r3 = run_simulation(spec, cluster, policy, {.seed = 12});
    CHECK(r1.metrics.to_json().dump() != r3.metrics.to_json().dump());
  }
}

TEST_CASE("cache exactness audit passes on a live pythia run") {
  WorkloadSpec spec = linear_workload(6);
  spec.types[0].path_expr = "a -> (b)^{1,3} -> terminal";
  spec.types[0].roles["b"].chat_accumulate = true;
  SimOptions options;
  options.seed = 5;
  options.audit_cache_exactness = true;
  auto result = run_simulation(spec, one_model_cluster(2, 30000), PolicyConfig::preset("pythia"),
                               options);
  CHECK(result.metrics.workflows_completed == 6);
  CHECK(result.cache_audit_checks > 0);
}

TEST_CASE("stalled simulations abort with a diagnostic") {
  WorkloadSpec spec = linear_workload(1);
  spec.types[0].task_prompt_tokens = 50000;  // never fits kv_capacity 1000
  SimOptions options;
  options.seed = 1;
  options.stall_timeout = 50.0;
  options.max_sim_time = 10000.0;
  CHECK_THROWS_AS(
      run_simulation(spec, one_model_cluster(1, 1000), PolicyConfig::preset("fcfs"), options),
      std::runtime_error);
}

TEST_CASE("config validation names the problem") {
  WorkloadSpec spec = linear_workload(1);
  spec.types[0].roles["b"].model_id = "nope";
  CHECK_THROWS_AS(run_simulation(spec, one_model_cluster(), PolicyConfig::preset("fcfs"), {}),
                  ConfigError);
  WorkloadSpec missing_role = linear_workload(1);
  missing_role.types[0].roles.erase("b");
  CHECK_THROWS_AS(
      run_simulation(missing_role, one_model_cluster(), PolicyConfig::preset("fcfs"), {}),
      ConfigError);
}

TEST_CASE("policy presets resolve and reject unknowns") {
  CHECK(PolicyConfig::preset("pythia").cache_speculative);
  CHECK_FALSE(PolicyConfig::preset("fcfs").annotate);
  CHECK_FALSE(PolicyConfig::preset("lru_only").cache_speculative);
  CHECK(PolicyConfig::preset("lru_only").routing_statistical);
  CHECK_FALSE(PolicyConfig::preset("static_scale").autoscaling);
  CHECK_THROWS_AS(PolicyConfig::preset("bogus"), ConfigError);
}

TEST_CASE("workload and cluster configs round-trip through JSON with validation") {
  WorkloadSpec spec = coding_assistant_workload();
  auto doc = workload_to_json(spec);
  WorkloadSpec back = workload_from_json(doc);
  CHECK(back.types.size() == spec.types.size());
  CHECK(back.types[0].path_expr == spec.types[0].path_expr);
  CHECK(back.types[0].roles.at("engineer").mean_len == doctest::Approx(3152.0));

  auto bad = doc;
  bad["workflow_types"][0].erase("path_expr");
  try {
    workload_from_json(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("path_expr") != std::string::npos);
  }

  ClusterConfig cluster = coding_assistant_cluster();
  auto cdoc = cluster_to_json(cluster);
  CHECK(cluster_from_json(cdoc).models.size() == 3);
  auto cbad = cdoc;
  cbad["models"][0].erase("kv_capacity");
  try {
    cluster_from_json(cbad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("kv_capacity") != std::string::npos);
  }
}
