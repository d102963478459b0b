// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "pythia/cache/manager.hpp"
#include "pythia/workflow/path_analysis.hpp"

using namespace pythia::cache;
using pythia::workflow::locate_position;
using pythia::workflow::parse_path_expr;
using pythia::workflow::PathExpr;
using pythia::workflow::TokenSeq;

namespace {

TokenSeq make_tokens(uint64_t salt, size_t n) {
  TokenSeq t(n);
  for (size_t i = 0; i < n; ++i) t[i] = salt * 1'000'003 + i;
  return t;
}

pythia::workflow::RequestEnvelope annotated_env(const std::shared_ptr<const PathExpr>& expr,
                                                const std::string& wf,
                                                const std::vector<std::string>& history) {
  pythia::workflow::RequestEnvelope env;
  env.request_id = "req";
  env.app_metadata = {"t", wf, history.back()};
  env.sys_annotations = pythia::workflow::SysAnnotations{};
  env.sys_annotations->path_regex = expr;
  auto pos = locate_position(*expr, history);
  REQUIRE(pos.has_value());
  env.position = *pos;
  return env;
}

}  // namespace

TEST_CASE("lookup on an empty cache is all zeros") {
  CacheHierarchy cache(10000, 10000);
  SharedL3 l3;
  auto m = cache.lookup(make_tokens(1, 300), &l3);
  CHECK(m.l1 == 0);
  CHECK(m.l2 == 0);
  CHECK(m.l3 == 0);
}

TEST_CASE("a staged 500-token prompt matches fully in L2") {
  CacheHierarchy cache(10000, 10000);
  TokenSeq prompt = make_tokens(2, 500);
  cache.insert_chain(Tier::L2, prompt, 500, {"w", "r"}, 1.0, 0);
  auto m = cache.lookup(prompt, nullptr);
  CHECK(m.l2 == 500);
  CHECK(m.l1 == 0);
  CHECK(cache.tier(Tier::L2).occupancy() == 500);
}

TEST_CASE("a 600-token prompt sharing a 250-token cached entry matches 250") {
  CacheHierarchy cache(10000, 10000);
  TokenSeq cached = make_tokens(3, 250);
  TokenSeq longer = make_tokens(3, 600);  // same first 250 tokens
  cache.insert_chain(Tier::L1, cached, 250, {"w", "r"}, 1.0, 0);
  auto m = cache.lookup(longer, nullptr);
  CHECK(m.l1 == 250);
  // Divergence inside a block floors to the block boundary.
  TokenSeq diverging = make_tokens(3, 600);
  diverging[200] ^= 0xff;
  CHECK(cache.lookup(diverging, nullptr).l1 == 192);
}

TEST_CASE("future_nodes tracks the remaining structure") {
  auto expr = std::make_shared<const PathExpr>(parse_path_expr(
      "planner -> (explorer)^{||3,4} -> (engineer)^{3,6} -> reviewer -> "
      "(engineer^{2-4} -> reviewer)? -> verifier -> terminal"));
  auto at_verifier = annotated_env(expr, "w",
                                   {"planner", "explorer", "explorer", "explorer", "engineer",
                                    "engineer", "engineer", "reviewer", "verifier"});
  CHECK(future_nodes(*at_verifier.position).empty());
  auto at_planner = annotated_env(expr, "w", {"planner"});
  auto f = future_nodes(*at_planner.position);
  CHECK(f == std::set<std::string>{"explorer", "engineer", "reviewer", "verifier"});
}

TEST_CASE("completion frees dead lineage and retains live lineage to L3") {
  auto expr = std::make_shared<const PathExpr>(parse_path_expr(
      "planner -> (explorer)^{||3,4} -> (engineer)^{3,6} -> reviewer -> "
      "(engineer^{2-4} -> reviewer)? -> verifier -> terminal"));
  CacheHierarchy cache(100000, 100000);
  SharedL3 l3;
  TokenSeq planner_blocks = make_tokens(10, 128);
  TokenSeq explorer_blocks = make_tokens(11, 128);
  cache.insert_chain(Tier::L1, planner_blocks, 128, {"w", "planner"}, 1.0, 0);
  cache.insert_chain(Tier::L1, explorer_blocks, 128, {"w", "explorer"}, 1.0, 0);
  TokenSeq other_wf = make_tokens(12, 64);
  cache.insert_chain(Tier::L1, other_wf, 64, {"other", "planner"}, 1.0, 0);

  auto env = annotated_env(expr, "w", {"planner"});
  auto actions = on_request_complete(env, cache);
  // planner never recurs: freed. explorer is in the future: retained.
  int frees = 0, retains = 0;
  for (const auto& a : actions) {
    const auto& block = cache.tier(a.tier).blocks().at(a.block_id);
    CHECK(block.lineage.workflow_id == "w");
    if (a.kind == CompletionAction::Kind::Free) {
      CHECK(block.lineage.role_id == "planner");
      ++frees;
    } else {
      CHECK(block.lineage.role_id == "explorer");
      ++retains;
    }
  }
  CHECK(frees == 2);
  CHECK(retains == 2);

  apply_completion(actions, cache, l3, 2.0);
  CHECK(cache.lookup(planner_blocks, &l3).l1 == 0);
  CHECK(cache.lookup(explorer_blocks, &l3).l1 == 128);  // retained resident
  CHECK(cache.lookup(explorer_blocks, &l3).l3 == 128);  // duplicated to L3
  CHECK(cache.lookup(other_wf, &l3).l1 == 64);          // other workflows untouched
}

TEST_CASE("completion at terminal frees every unpinned block of the workflow") {
  auto expr = std::make_shared<const PathExpr>(parse_path_expr("a -> verifier -> terminal"));
  CacheHierarchy cache(100000, 100000);
  SharedL3 l3;
  for (uint64_t i = 0; i < 5; ++i) {
    cache.insert_chain(i % 2 ? Tier::L1 : Tier::L2, make_tokens(20 + i, 64), 64,
                       {"w", i % 2 ? "a" : "verifier"}, 1.0, 0);
  }
  TokenSeq pinned = make_tokens(40, 64);
  cache.insert_chain(Tier::L1, pinned, 64, {"w", "a"}, 1.0, 1);  // pinned survives

  auto env = annotated_env(expr, "w", {"a", "verifier"});
  auto actions = on_request_complete(env, cache);
  for (const auto& a : actions) CHECK(a.kind == CompletionAction::Kind::Free);
  apply_completion(actions, cache, l3, 2.0);
  CHECK(cache.tier(Tier::L1).occupancy() == 64);  // only the pinned block
  CHECK(cache.tier(Tier::L2).occupancy() == 0);
  CHECK(cache.lookup(pinned, &l3).l1 == 64);
}

TEST_CASE("completion actions equal the set-filter oracle on random states") {
  auto expr = std::make_shared<const PathExpr>(
      parse_path_expr("a -> b? -> (c)^{1,3} -> d -> terminal"));
  std::mt19937_64 rng(71);
  const char* roles[] = {"a", "b", "c", "d", "zz"};
  for (int trial = 0; trial < 100; ++trial) {
    CacheHierarchy cache(1'000'000, 1'000'000);
    struct Placed {
      uint64_t id;
      Tier tier;
      std::string wf, role;
      bool pinned;
    };
    std::vector<Placed> placed;
    for (int i = 0; i < 20; ++i) {
      Tier tier = rng() % 2 ? Tier::L1 : Tier::L2;
      std::string wf = rng() % 2 ? "w" : "other";
      std::string role = roles[rng() % 5];
      bool pin = tier == Tier::L1 && rng() % 4 == 0;
      TokenSeq tokens = make_tokens(1000 + trial * 100 + i, 64);
      cache.insert_chain(tier, tokens, 64, {wf, role}, 1.0, pin ? 1 : 0);
      auto hashes = chain_boundary_hashes(tokens);
      placed.push_back({cache.tier(tier).find_chain(hashes[0])->block_id, tier, wf, role, pin});
    }
    std::vector<std::string> history{"a"};
    auto env = annotated_env(expr, "w", history);
    auto future = pythia::workflow::future_roles(*env.position);
    auto actions = on_request_complete(env, cache);
    std::map<uint64_t, CompletionAction::Kind> got;
    for (const auto& a : actions) got[a.block_id] = a.kind;
    for (const auto& p : placed) {
      if (p.pinned || p.wf != "w") {
        CHECK(got.count(p.id) == 0);
      } else if (future.count(p.role)) {
        CHECK(got.at(p.id) == CompletionAction::Kind::RetainAndWriteL3);
      } else {
        CHECK(got.at(p.id) == CompletionAction::Kind::Free);
      }
    }
  }
}

TEST_CASE("unprofiled completion is a no-op") {
  CacheHierarchy cache(10000, 10000);
  cache.insert_chain(Tier::L1, make_tokens(5, 64), 64, {"w", "a"}, 1.0, 0);
  pythia::workflow::RequestEnvelope env;
  env.app_metadata = {"t", "w", "a"};
  CHECK(on_request_complete(env, cache).empty());
}

TEST_CASE("forward staging decisions") {
  auto expr = std::make_shared<const PathExpr>(parse_path_expr("a -> b -> terminal"));
  pythia::workflow::MapPromptHistory history;
  history.entries["req_a"].request = make_tokens(50, 100);
  history.entries["req_a"].response = make_tokens(51, 200);

  auto env = annotated_env(expr, "w", {"a"});
  pythia::workflow::PromptTemplate tmpl;
  tmpl.segments.push_back({pythia::workflow::PromptSegment::Kind::Literal,
                           "sys b words here", "", {}, 0, 0});
  {
    pythia::workflow::PromptSegment ref;
    ref.kind = pythia::workflow::PromptSegment::Kind::Ref;
    ref.request_id = "req_a";
    ref.source = pythia::workflow::PromptSegment::Source::Response;
    ref.start = 0;
    ref.end = 200;
    tmpl.segments.push_back(ref);
  }
  env.sys_annotations->prompt_composition["b"] = tmpl;

  auto assembled = pythia::workflow::assemble_prompt(tmpl, history);
  REQUIRE(assembled.has_value());
  int64_t len = static_cast<int64_t>(assembled->size());

  SUBCASE("prefix nowhere, gpu idle: background prefill of the whole prompt") {
    CacheHierarchy cache(10000, 10000);
    SharedL3 l3;
    auto actions = on_prefetch_requested(env, cache, l3, history, true);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].kind == StageAction::Kind::BackgroundPrefill);
    CHECK(actions[0].from == 0);
    CHECK(actions[0].to == len);
  }
  SUBCASE("prefix nowhere, gpu busy: skip") {
    CacheHierarchy cache(10000, 10000);
    SharedL3 l3;
    auto actions = on_prefetch_requested(env, cache, l3, history, false);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].kind == StageAction::Kind::Skip);
    CHECK(actions[0].reason == "gpu-busy");
  }
  SUBCASE("prefix in L3, gpu busy: promote to host only") {
    CacheHierarchy cache(10000, 10000);
    SharedL3 l3;
    CacheHierarchy scratch(10000, 10000);
    scratch.insert_chain(Tier::L2, *assembled, len, {"w", "b"}, 0.5, 0);
    for (const auto& [id, b] : scratch.tier(Tier::L2).blocks()) {
      (void)id;
      l3.store().put(b.chain_hash, b.span_start, b.span_end, b.lineage, 0.5, 0, l3.id_counter());
    }
    auto actions = on_prefetch_requested(env, cache, l3, history, false);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].kind == StageAction::Kind::PromoteToHost);
    CHECK(actions[0].from == 0);
    CHECK(actions[0].to == len);
  }
  SUBCASE("prefix already fully staged in L2: skip") {
    CacheHierarchy cache(10000, 10000);
    SharedL3 l3;
    cache.insert_chain(Tier::L2, *assembled, len, {"w", "b"}, 0.5, 0);
    auto actions = on_prefetch_requested(env, cache, l3, history, true);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].kind == StageAction::Kind::Skip);
    CHECK(actions[0].reason == "already-staged");
  }
  SUBCASE("unresolved leading reference: skip") {
    auto env2 = annotated_env(expr, "w", {"a"});
    pythia::workflow::PromptTemplate bad;
    pythia::workflow::PromptSegment ref;
    ref.kind = pythia::workflow::PromptSegment::Kind::Ref;
    ref.request_id = "missing";
    ref.source = pythia::workflow::PromptSegment::Source::Response;
    ref.start = 0;
    ref.end = 10;
    bad.segments.push_back(ref);
    env2.sys_annotations->prompt_composition["b"] = bad;
    CacheHierarchy cache(10000, 10000);
    SharedL3 l3;
    auto actions = on_prefetch_requested(env2, cache, l3, history, true);
    REQUIRE(actions.size() == 1);
    CHECK(actions[0].kind == StageAction::Kind::Skip);
    CHECK(actions[0].reason == "unresolved");
  }
}

TEST_CASE("eviction order: dead lineage oldest-first, then LRU; pinned never") {
  FutureRegistry registry;
  registry.update("w_live", {"b"});

  SUBCASE("dead block goes before a future-relevant one") {
    CacheHierarchy cache(128, 10000);
    cache.insert_chain(Tier::L1, make_tokens(1, 64), 64, {"w_live", "b"}, 5.0, 0);   // live
    cache.insert_chain(Tier::L1, make_tokens(2, 64), 64, {"w_live", "dead"}, 9.0, 0);  // dead
    auto result = evict_for_space(cache, Tier::L1, 64, registry, true);
    CHECK(result.satisfied);
    REQUIRE(result.freed.size() == 1);
    const auto& blocks = cache.tier(Tier::L1).blocks();
    REQUIRE(blocks.size() == 1);
    CHECK(blocks.begin()->second.lineage.role_id == "b");
  }
  SUBCASE("all dead: pure oldest-first") {
    CacheHierarchy cache(192, 10000);
    cache.insert_chain(Tier::L1, make_tokens(1, 64), 64, {"x", "r"}, 3.0, 0);
    cache.insert_chain(Tier::L1, make_tokens(2, 64), 64, {"x", "r"}, 1.0, 0);
    cache.insert_chain(Tier::L1, make_tokens(3, 64), 64, {"x", "r"}, 2.0, 0);
    auto result = evict_for_space(cache, Tier::L1, 128, registry, true);
    REQUIRE(result.freed.size() == 2);
    CHECK(cache.tier(Tier::L1).blocks().begin()->second.last_access == 3.0);
  }
  SUBCASE("matches the two-phase sort oracle on random states") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
      CacheHierarchy cache(100000, 10000);
      struct Item {
        uint64_t id;
        bool dead, pinned;
        double access;
        int64_t size;
      };
      std::vector<Item> items;
      int64_t occupancy = 0;
      for (int i = 0; i < 15; ++i) {
        bool dead = rng() % 2;
        bool pin = rng() % 5 == 0;
        double access = static_cast<double>(rng() % 100);
        TokenSeq tokens = make_tokens(5000 + trial * 100 + i, 64);
        cache.insert_chain(Tier::L1, tokens, 64, {dead ? "w_dead" : "w_live", "b"}, access,
                           pin ? 1 : 0);
        auto hashes = chain_boundary_hashes(tokens);
        items.push_back({cache.tier(Tier::L1).find_chain(hashes[0])->block_id, dead, pin, access,
                         64});
        occupancy += 64;
      }
      int64_t needed = 100000 - occupancy + static_cast<int64_t>(rng() % 500);
      auto result = evict_for_space(cache, Tier::L1, needed, registry, true);

      std::vector<Item> candidates;
      for (const auto& it : items) {
        if (!it.pinned) candidates.push_back(it);
      }
      std::sort(candidates.begin(), candidates.end(), [](const Item& a, const Item& b) {
        if (a.dead != b.dead) return a.dead;
        if (a.access != b.access) return a.access < b.access;
        return a.id < b.id;
      });
      int64_t excess = occupancy + needed - 100000;
      std::vector<uint64_t> expect;
      int64_t freed = 0;
      for (const auto& c : candidates) {
        if (freed >= excess) break;
        expect.push_back(c.id);
        freed += c.size;
      }
      CHECK(result.freed == expect);
    }
  }
  SUBCASE("with speculative off the order is plain LRU") {
    CacheHierarchy cache(128, 10000);
    cache.insert_chain(Tier::L1, make_tokens(1, 64), 64, {"w_live", "b"}, 1.0, 0);  // oldest, live
    cache.insert_chain(Tier::L1, make_tokens(2, 64), 64, {"w_live", "dead"}, 9.0, 0);
    auto result = evict_for_space(cache, Tier::L1, 64, registry, false);
    REQUIRE(result.freed.size() == 1);
    const auto& blocks = cache.tier(Tier::L1).blocks();
    CHECK(blocks.begin()->second.last_access == 9.0);  // LRU evicted the older one
  }
  SUBCASE("insufficient unpinned space reports failure") {
    CacheHierarchy cache(128, 10000);
    cache.insert_chain(Tier::L1, make_tokens(1, 64), 64, {"x", "r"}, 1.0, 1);
    cache.insert_chain(Tier::L1, make_tokens(2, 64), 64, {"x", "r"}, 1.0, 1);
    auto result = evict_for_space(cache, Tier::L1, 64, registry, true);
    CHECK_FALSE(result.satisfied);
  }
}
