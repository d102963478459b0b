// SPDX-License-Identifier: Apache-2.0

#include "pythia/cache/manager.hpp"

#include <algorithm>

namespace pythia::cache {

std::set<std::string> future_nodes(const workflow::PathCursor& position) {
  return workflow::future_roles(position);
}

void FutureRegistry::update(const std::string& workflow_id, std::set<std::string> roles) {
  futures_[workflow_id] = std::move(roles);
}

void FutureRegistry::drop(const std::string& workflow_id) { futures_.erase(workflow_id); }

bool FutureRegistry::lineage_live(const Lineage& lineage) const {
  auto it = futures_.find(lineage.workflow_id);
  if (it == futures_.end()) return false;
  return it->second.count(lineage.role_id) > 0;
}

std::vector<CompletionAction> on_request_complete(const workflow::RequestEnvelope& req,
                                                  const CacheHierarchy& cache) {
  std::vector<CompletionAction> actions;
  if (req.unprofiled() || !req.position) return actions;  // reactive LRU governs
  std::set<std::string> future = future_nodes(*req.position);
  for (Tier t : {Tier::L1, Tier::L2}) {
    for (const auto& [id, block] : cache.tier(t).blocks()) {
      if (block.pinned()) continue;
      if (block.lineage.workflow_id != req.app_metadata.workflow_id) continue;
      if (future.count(block.lineage.role_id)) {
        actions.push_back({CompletionAction::Kind::RetainAndWriteL3, t, id});
      } else {
        actions.push_back({CompletionAction::Kind::Free, t, id});
      }
    }
  }
  return actions;
}

void apply_completion(const std::vector<CompletionAction>& actions, CacheHierarchy& cache,
                      SharedL3& l3, double now) {
  for (const auto& action : actions) {
    TierStore& store = cache.tier(action.tier);
    auto it = store.blocks().find(action.block_id);
    if (it == store.blocks().end()) continue;
    const CacheBlock& block = it->second;
    if (action.kind == CompletionAction::Kind::Free) {
      store.erase(action.block_id);
    } else {
      l3.store().put(block.chain_hash, block.span_start, block.span_end, block.lineage, now, 0,
                     l3.id_counter());
    }
  }
}

std::vector<StageAction> on_prefetch_requested(const workflow::RequestEnvelope& req,
                                               const CacheHierarchy& target_cache,
                                               const SharedL3& l3,
                                               const workflow::PromptHistory& history,
                                               bool gpu_idle) {
  std::vector<StageAction> actions;
  if (req.unprofiled()) return actions;
  for (const auto& [role, tmpl] : req.sys_annotations->prompt_composition) {
    StageAction action;
    action.successor_role = role;
    action.lineage = {req.app_metadata.workflow_id, role};
    auto prefix = workflow::assemble_resolvable_prefix(tmpl, history);
    if (prefix.tokens.empty()) {
      action.kind = StageAction::Kind::Skip;
      action.reason = "unresolved";
      actions.push_back(std::move(action));
      continue;
    }
    action.tokens = std::move(prefix.tokens);
    int64_t len = static_cast<int64_t>(action.tokens.size());
    auto match = target_cache.lookup(action.tokens, &l3);
    int64_t staged = std::max(match.l1, match.l2);
    if (staged >= len) {
      action.kind = StageAction::Kind::Skip;
      action.reason = "already-staged";
    } else if (match.l3 > staged) {
      action.kind = StageAction::Kind::PromoteToHost;
      action.from = staged;
      action.to = match.l3;
    } else if (gpu_idle) {
      action.kind = StageAction::Kind::BackgroundPrefill;
      action.from = staged;
      action.to = len;
    } else {
      action.kind = StageAction::Kind::Skip;
      action.reason = "gpu-busy";
    }
    actions.push_back(std::move(action));
  }
  return actions;
}

EvictionResult evict_for_space(CacheHierarchy& cache, Tier tier, int64_t needed,
                               const FutureRegistry& registry, bool speculative) {
  EvictionResult result;
  TierStore& store = cache.tier(tier);
  int64_t base = tier == Tier::L1 ? cache.l1_occupancy() : store.occupancy();
  int64_t excess = base + needed - store.capacity();
  if (excess <= 0) {
    result.satisfied = true;
    return result;
  }

  struct Victim {
    bool dead;
    double last_access;
    uint64_t id;
    int64_t size;
  };
  std::vector<Victim> victims;
  for (const auto& [id, block] : store.blocks()) {
    if (block.pinned()) continue;
    bool dead = speculative && !registry.lineage_live(block.lineage);
    victims.push_back({dead, block.last_access, id, block.size()});
  }
  std::sort(victims.begin(), victims.end(), [](const Victim& a, const Victim& b) {
    if (a.dead != b.dead) return a.dead;  // dead lineage first
    if (a.last_access != b.last_access) return a.last_access < b.last_access;
    return a.id < b.id;
  });
  for (const auto& v : victims) {
    if (result.freed_tokens >= excess) break;
    store.erase(v.id);
    result.freed.push_back(v.id);
    result.freed_tokens += v.size;
  }
  result.satisfied = result.freed_tokens >= excess;
  return result;
}

}  // namespace pythia::cache
