// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "pythia/sched/priority.hpp"
#include "pythia/sched/router.hpp"
#include "pythia/sched/worker.hpp"
#include "pythia/workflow/path_analysis.hpp"

using namespace pythia::sched;
using pythia::workflow::locate_position;
using pythia::workflow::parse_path_expr;
using pythia::workflow::PathExpr;

TEST_CASE("capacity_holds sums reservations against capacity") {
  NodeView node;
  node.replica_id = 0;
  node.kv_capacity = 1000;
  Reservation small{0, 200, 0.01, 0};
  CHECK(capacity_holds(node, small));

  node.assigned = {{0, 400, 0.01, 0}, {0, 400, 0.01, 0}};
  Reservation r300{0, 300, 0.01, 0};
  CHECK_FALSE(capacity_holds(node, r300));  // 1100 > 1000
  Reservation r200{0, 200, 0.01, 0};
  CHECK(capacity_holds(node, r200));  // 1000 <= 1000
}

TEST_CASE("reservation grows once a tail generation exceeds the bound") {
  Reservation r{100, 500, 0.01, 800};
  CHECK(r.tokens() == 900);
}

TEST_CASE("oom_bound is the plain sum of alphas") {
  NodeView node;
  node.kv_capacity = 1'000'000;
  Reservation one{0, 10, 0.01, 0};
  CHECK(oom_bound(node, one) == doctest::Approx(0.01));
  node.assigned = {{0, 10, 0.01, 0}, {0, 10, 0.01, 0}};
  CHECK(oom_bound(node, one) == doctest::Approx(0.03));
}

TEST_CASE("monte-carlo: observed capacity overflow stays under the union bound") {
  // Each length is uniform on [1,100]; u = 99 gives a true exceedance of
  // exactly 0.01. Capacity equals the sum of bounds.
  std::mt19937_64 rng(2024);
  const int k = 5;
  const int64_t u = 99;
  const int64_t capacity = k * u;
  const double bound = k * 0.01;
  int trials = 10000, ooms = 0;
  for (int t = 0; t < trials; ++t) {
    int64_t total = 0;
    for (int i = 0; i < k; ++i) total += 1 + static_cast<int64_t>(rng() % 100);
    if (total > capacity) ++ooms;
  }
  CHECK(static_cast<double>(ooms) / trials <= bound);
}

TEST_CASE("route picks the safe node with maximum headroom") {
  Reservation req{0, 100, 0.01, 0};
  SUBCASE("single qualifying node") {
    std::vector<NodeView> nodes{{7, 1000, {}, 0}};
    auto d = route(nodes, req, 0.05);
    REQUIRE(d.target.has_value());
    CHECK(*d.target == 7);
    CHECK(d.headroom == 900);
    CHECK(d.oom_bound == doctest::Approx(0.01));
  }
  SUBCASE("larger headroom wins") {
    std::vector<NodeView> nodes{{1, 1000, {{0, 400, 0.0, 0}}, 0}, {2, 1000, {{0, 600, 0.0, 0}}, 0}};
    auto d = route(nodes, req, 0.05);
    CHECK(*d.target == 1);
    CHECK_FALSE(d.cache_tiebreak_used);
  }
  SUBCASE("staged L2 prefix breaks headroom ties") {
    std::vector<NodeView> nodes{{1, 1000, {}, 0}, {2, 1000, {}, 400}};
    auto d = route(nodes, req, 0.05);
    CHECK(*d.target == 2);
    CHECK(d.cache_tiebreak_used);
  }
  SUBCASE("remaining ties go to the lowest replica id") {
    std::vector<NodeView> nodes{{4, 1000, {}, 0}, {3, 1000, {}, 0}};
    auto d = route(nodes, req, 0.05);
    CHECK(*d.target == 3);
  }
  SUBCASE("no safe node means waiting, not an error") {
    std::vector<NodeView> nodes{{1, 1000, {{0, 950, 0.0, 0}}, 0}};
    auto d = route(nodes, req, 0.05);
    CHECK_FALSE(d.target.has_value());
    std::vector<NodeView> unsafe{{1, 10000, {{0, 10, 0.04, 0}, {0, 10, 0.04, 0}}, 0}};
    auto d2 = route(unsafe, req, 0.05);  // bound 0.09 > epsilon
    CHECK_FALSE(d2.target.has_value());
  }
}

TEST_CASE("route never returns a node violating the oom bound") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 500; ++t) {
    std::vector<NodeView> nodes;
    int n = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) {
      NodeView node{i, 2000 + static_cast<int64_t>(rng() % 2000), {}, 0};
      int k = static_cast<int>(rng() % 6);
      for (int j = 0; j < k; ++j) {
        node.assigned.push_back(
            {static_cast<int64_t>(rng() % 200), static_cast<int64_t>(rng() % 500),
             0.005 * static_cast<double>(rng() % 5), 0});
      }
      nodes.push_back(std::move(node));
    }
    Reservation req{static_cast<int64_t>(rng() % 200), static_cast<int64_t>(rng() % 500), 0.01, 0};
    auto d = route(nodes, req, 0.05);
    if (d.target) {
      const auto& node = nodes[static_cast<size_t>(*d.target)];
      CHECK(capacity_holds(node, req));
      CHECK(oom_bound(node, req) <= 0.05);
    }
  }
}

TEST_CASE("least-outstanding baseline routing") {
  std::vector<NodeView> nodes{{1, 0, {{}, {}}, 0}, {2, 0, {{}}, 0}};
  auto target = route_least_outstanding(nodes);
  REQUIRE(target.has_value());
  CHECK(*target == 2);
}

namespace {

pythia::workflow::PathCursor cursor_at(const PathExpr& expr,
                                       const std::vector<std::string>& history) {
  auto pos = locate_position(expr, history);
  REQUIRE(pos.has_value());
  return *pos;
}

}  // namespace

TEST_CASE("priority: terminal-adjacent request gets base 1.0") {
  PathExpr e = parse_path_expr("verifier -> terminal");
  pythia::workflow::RequestEnvelope env;
  env.sys_annotations = pythia::workflow::SysAnnotations{};
  env.sys_annotations->path_regex = std::make_shared<const PathExpr>(e);
  env.position = cursor_at(*env.sys_annotations->path_regex, {"verifier"});
  auto score = set_priority(env, {}, {}, {1.0, 1.0, 2});
  CHECK(score.s_completion == doctest::Approx(1.0));
  CHECK(score.s_unblock == doctest::Approx(0.0));
  CHECK(env.base_priority == doctest::Approx(1.0));
}

TEST_CASE("priority: near-terminal requests outrank early-stage ones") {
  PathExpr e = parse_path_expr(
      "planner -> (explorer)^{||3,4} -> (engineer)^{3,6} -> reviewer -> "
      "(engineer^{2-4} -> reviewer)? -> verifier -> terminal");
  auto shared = std::make_shared<const PathExpr>(e);
  pythia::workflow::RequestEnvelope early, late;
  early.sys_annotations = pythia::workflow::SysAnnotations{};
  early.sys_annotations->path_regex = shared;
  early.position = cursor_at(*shared, {"planner"});
  late.sys_annotations = pythia::workflow::SysAnnotations{};
  late.sys_annotations->path_regex = shared;
  late.position = cursor_at(*shared, {"planner", "explorer", "explorer", "explorer", "engineer",
                                      "engineer", "engineer", "reviewer"});
  auto e_score = set_priority(early, {}, {}, {1.0, 1.0, 2});
  auto l_score = set_priority(late, {}, {}, {1.0, 1.0, 2});
  CHECK(l_score.base_priority > e_score.base_priority);
  CHECK(expected_remaining_distance(*early.position) > expected_remaining_distance(*late.position));
}

TEST_CASE("downstream idle risk weights by inverse expected distance") {
  std::map<std::string, std::string> role_to_model{
      {"b", "m_b"}, {"far", "m_far"}, {"c", "m_c"}, {"d", "m_d"}};

  SUBCASE("no idle models, no risk") {
    PathExpr e = parse_path_expr("a -> b -> terminal");
    auto cur = cursor_at(e, {"a"});
    std::map<std::string, int64_t> depths{{"m_b", 5}};
    CHECK(downstream_idle_risk(depths, role_to_model, cur, 2) == doctest::Approx(0.0));
  }
  SUBCASE("distance one yields a full point, distance ten a tenth") {
    PathExpr near = parse_path_expr("a -> b -> terminal");
    auto cur = cursor_at(near, {"a"});
    std::map<std::string, int64_t> depths{{"m_b", 0}};
    CHECK(downstream_idle_risk(depths, role_to_model, cur, 2) == doctest::Approx(1.0));

    PathExpr far = parse_path_expr("a -> (x)^{9,9} -> far -> terminal");
    auto fcur = cursor_at(far, {"a"});
    std::map<std::string, int64_t> fdepths{{"m_far", 0}};
    CHECK(downstream_idle_risk(fdepths, role_to_model, fcur, 2) == doctest::Approx(0.1));
  }
  SUBCASE("risks add over idle models") {
    PathExpr e = parse_path_expr("a -> x -> c -> x2 -> d -> terminal");
    auto cur = cursor_at(e, {"a"});
    std::map<std::string, int64_t> depths{{"m_c", 0}, {"m_d", 1}};
    // c at distance 2, d at distance 4.
    CHECK(downstream_idle_risk(depths, role_to_model, cur, 2) == doctest::Approx(0.75));
  }
}

TEST_CASE("priority weights are linear and monotone in idle risk") {
  PathExpr e = parse_path_expr("a -> b -> terminal");
  auto shared = std::make_shared<const PathExpr>(e);
  pythia::workflow::RequestEnvelope env;
  env.sys_annotations = pythia::workflow::SysAnnotations{};
  env.sys_annotations->path_regex = shared;
  env.position = cursor_at(*shared, {"a"});
  std::map<std::string, std::string> role_to_model{{"b", "m_b"}};
  std::map<std::string, int64_t> idle{{"m_b", 0}}, busy{{"m_b", 10}};

  auto s1 = set_priority(env, idle, role_to_model, {1.0, 1.0, 2});
  auto s2 = set_priority(env, idle, role_to_model, {1.0, 2.0, 2});
  CHECK(s2.base_priority - s1.base_priority == doctest::Approx(s1.s_unblock));

  auto no_idle = set_priority(env, busy, role_to_model, {1.0, 1.0, 2});
  CHECK(s1.base_priority >= no_idle.base_priority);
}

TEST_CASE("unprofiled requests get zero base priority") {
  pythia::workflow::RequestEnvelope env;
  env.base_priority = 42.0;
  auto score = set_priority(env, {}, {}, {1.0, 1.0, 2});
  CHECK(score.base_priority == doctest::Approx(0.0));
  CHECK(env.base_priority == doctest::Approx(0.0));
}

TEST_CASE("effective priority ages with wait time") {
  CHECK(effective_priority(1.0, 10.0, 10.0, 0.01) == doctest::Approx(1.0));
  CHECK(effective_priority(1.0, 0.0, 50.0, 0.01) == doctest::Approx(1.5));
  // Equal base: strictly higher for the earlier enqueue.
  CHECK(effective_priority(1.0, 5.0, 60.0, 0.02) > effective_priority(1.0, 20.0, 60.0, 0.02));
}

TEST_CASE("form_batch admits the highest-priority prefix that fits") {
  SUBCASE("empty pool") { CHECK(form_batch({}, 0, 1000, 0.0, 0.02).empty()); }
  SUBCASE("top two of three") {
    std::vector<QueueItem> pool{
        {"r1", 3.0, 0.0, 400}, {"r2", 2.0, 0.0, 400}, {"r3", 1.0, 0.0, 400}};
    auto admitted = form_batch(pool, 0, 1000, 0.0, 0.02);
    REQUIRE(admitted.size() == 2);
    CHECK(pool[admitted[0]].request_id == "r1");
    CHECK(pool[admitted[1]].request_id == "r2");
  }
  SUBCASE("matches the sort-then-prefix oracle on random pools") {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 300; ++t) {
      std::vector<QueueItem> pool;
      int n = static_cast<int>(rng() % 8);
      for (int i = 0; i < n; ++i) {
        pool.push_back({"r" + std::to_string(i), 0.1 * static_cast<double>(rng() % 30),
                        static_cast<double>(rng() % 100), 100 + static_cast<int64_t>(rng() % 400)});
      }
      int64_t active = static_cast<int64_t>(rng() % 500);
      int64_t cap = 600 + static_cast<int64_t>(rng() % 1000);
      double now = 120.0, rate = 0.02;
      auto admitted = form_batch(pool, active, cap, now, rate);

      // Oracle: sort independently, take the longest feasible prefix.
      std::vector<size_t> order(pool.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        double ea = pool[a].base_priority + rate * (now - pool[a].enqueue_time);
        double eb = pool[b].base_priority + rate * (now - pool[b].enqueue_time);
        if (ea != eb) return ea > eb;
        if (pool[a].enqueue_time != pool[b].enqueue_time)
          return pool[a].enqueue_time < pool[b].enqueue_time;
        return pool[a].request_id < pool[b].request_id;
      });
      std::vector<size_t> expect;
      int64_t reserved = active;
      for (size_t idx : order) {
        if (reserved + pool[idx].reservation > cap) break;
        reserved += pool[idx].reservation;
        expect.push_back(idx);
      }
      CHECK(admitted == expect);
    }
  }
}

TEST_CASE("with zero weights and aging, ordering degenerates to FCFS") {
  std::vector<QueueItem> pool{{"r_late", 0.0, 30.0, 10}, {"r_early", 0.0, 1.0, 10},
                              {"r_mid", 0.0, 10.0, 10}};
  auto admitted = form_batch(pool, 0, 1000, 100.0, 0.02);
  REQUIRE(admitted.size() == 3);
  CHECK(pool[admitted[0]].request_id == "r_early");
  CHECK(pool[admitted[1]].request_id == "r_mid");
  CHECK(pool[admitted[2]].request_id == "r_late");
}

TEST_CASE("preemption victim is the lowest effective priority") {
  SUBCASE("single active request") {
    std::vector<QueueItem> active{{"only", 5.0, 0.0, 10}};
    CHECK(select_preemption_victim(active, 1.0, 0.02) == 0);
  }
  SUBCASE("0.1 loses to 0.9") {
    std::vector<QueueItem> active{{"high", 0.9, 0.0, 10}, {"low", 0.1, 0.0, 10}};
    CHECK(active[select_preemption_victim(active, 0.0, 0.02)].request_id == "low");
  }
  SUBCASE("argmin oracle on random sets") {
    std::mt19937_64 rng(33);
    for (int t = 0; t < 300; ++t) {
      std::vector<QueueItem> active;
      int n = 1 + static_cast<int>(rng() % 7);
      for (int i = 0; i < n; ++i) {
        active.push_back({"r" + std::to_string(i), 0.25 * static_cast<double>(rng() % 8),
                          static_cast<double>(rng() % 50), 10});
      }
      double now = 80.0, rate = 0.02;
      size_t got = select_preemption_victim(active, now, rate);
      double got_eff =
          effective_priority(active[got].base_priority, active[got].enqueue_time, now, rate);
      for (const auto& item : active) {
        CHECK(got_eff <= effective_priority(item.base_priority, item.enqueue_time, now, rate));
      }
    }
  }
}
