// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pythia/cache/hierarchy.hpp"
#include "pythia/workflow/envelope.hpp"
#include "pythia/workflow/path_analysis.hpp"

namespace pythia::cache {

// Roles reachable from the request's position before Terminal. Wraps the
// expression machinery; the completion and eviction policies both key off
// this set.
std::set<std::string> future_nodes(const workflow::PathCursor& position);

// Which roles each live workflow can still invoke; updated at every annotate
// and completion, dropped when the workflow finishes. A block whose lineage
// role is absent here is dead weight for eviction purposes.
class FutureRegistry {
 public:
  void update(const std::string& workflow_id, std::set<std::string> roles);
  void drop(const std::string& workflow_id);
  bool lineage_live(const Lineage& lineage) const;

 private:
  std::map<std::string, std::set<std::string>> futures_;
};

struct CompletionAction {
  enum class Kind { Free, RetainAndWriteL3 } kind;
  Tier tier;
  uint64_t block_id;
};

// Early-eviction policy at request completion: every unpinned local block of
// the request's workflow is freed when its lineage role cannot recur, or
// retained and written out to shared L3 when it can. Unprofiled requests get
// no actions (plain LRU governs). Pure: returns the action list without
// applying it.
std::vector<CompletionAction> on_request_complete(const workflow::RequestEnvelope& req,
                                                  const CacheHierarchy& cache);

// Applies completion actions; retained blocks stay resident and are
// duplicated into L3.
void apply_completion(const std::vector<CompletionAction>& actions, CacheHierarchy& cache,
                      SharedL3& l3, double now);

struct StageAction {
  enum class Kind { PromoteToHost, BackgroundPrefill, Skip } kind = Kind::Skip;
  std::string reason;          // Skip only
  std::string successor_role;
  workflow::TokenSeq tokens;   // assembled target prefix
  int64_t from = 0, to = 0;    // token range to stage, [from, to)
  Lineage lineage;
};

// Forward staging for each successor template on the envelope: promote an
// L3-resident prefix into host L2, or background-prefill it on an idle GPU.
// Prefixes already staged in L2 (or pinned in L1) are skipped, as are
// templates whose leading reference cannot be resolved yet. Staged data
// lands in L2 only; nothing touches L1 until a real request pins it.
std::vector<StageAction> on_prefetch_requested(const workflow::RequestEnvelope& req,
                                               const CacheHierarchy& target_cache,
                                               const SharedL3& l3,
                                               const workflow::PromptHistory& history,
                                               bool gpu_idle);

struct EvictionResult {
  std::vector<uint64_t> freed;  // block ids, in eviction order
  int64_t freed_tokens = 0;
  bool satisfied = false;
};

// Frees unpinned blocks until `needed` tokens fit in the tier: dead-lineage
// blocks oldest-first, then live blocks by LRU. With the speculative policy
// off the first phase disappears and this is plain LRU.
EvictionResult evict_for_space(CacheHierarchy& cache, Tier tier, int64_t needed,
                               const FutureRegistry& registry, bool speculative);

}  // namespace pythia::cache
