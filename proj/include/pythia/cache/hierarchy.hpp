// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "pythia/workflow/tokens.hpp"

namespace pythia::cache {

inline constexpr int64_t kBlockTokens = 64;  // fixed block size, last block ragged

enum class Tier { L1, L2, L3 };
const char* tier_name(Tier t);

struct Lineage {
  std::string workflow_id;
  std::string role_id;
  friend bool operator==(const Lineage&, const Lineage&) = default;
};

// A cached span of a token chain. chain_hash commits to every token from the
// chain start through span_end, so equal hashes mean equal prefixes; blocks
// only ever match as part of a consecutive chain walk.
struct CacheBlock {
  uint64_t block_id = 0;
  uint64_t chain_hash = 0;
  int64_t span_start = 0;
  int64_t span_end = 0;
  Lineage lineage;
  double last_access = 0.0;
  int pin_count = 0;

  int64_t size() const { return span_end - span_start; }
  bool pinned() const { return pin_count > 0; }
};

// Hashes of the block-boundary prefixes of a token sequence: entry i commits
// to tokens [0, min((i+1)*kBlockTokens, n)).
std::vector<uint64_t> chain_boundary_hashes(const workflow::TokenSeq& tokens);

class TierStore {
 public:
  explicit TierStore(int64_t capacity) : capacity_(capacity) {}

  int64_t capacity() const { return capacity_; }
  int64_t occupancy() const { return occupancy_; }
  const std::map<uint64_t, CacheBlock>& blocks() const { return blocks_; }

  const CacheBlock* find_chain(uint64_t chain_hash) const;
  CacheBlock* find_chain_mut(uint64_t chain_hash);

  // Inserts (or touches) one block; returns its id.
  uint64_t put(uint64_t chain_hash, int64_t span_start, int64_t span_end, const Lineage& lineage,
               double now, int pin_delta, uint64_t* id_counter);
  void erase(uint64_t block_id);

  // Longest prefix of the token sequence present as a consecutive block
  // chain, including a ragged final block of a shorter cached chain.
  int64_t matched_prefix(const workflow::TokenSeq& tokens,
                         const std::vector<uint64_t>& boundary_hashes) const;

 private:
  int64_t capacity_;
  int64_t occupancy_ = 0;
  std::map<uint64_t, CacheBlock> blocks_;                 // block_id -> block
  std::unordered_map<uint64_t, uint64_t> by_chain_hash_;  // chain_hash -> block_id
  std::multimap<int64_t, uint64_t> by_span_start_;        // span_start -> block_id
};

// Unbounded shared storage reachable from every replica.
class SharedL3 {
 public:
  TierStore& store() { return store_; }
  const TierStore& store() const { return store_; }
  uint64_t* id_counter() { return &next_id_; }

 private:
  TierStore store_{INT64_MAX};
  uint64_t next_id_ = 1;
};

// Per-replica two-tier cache (GPU L1 + host L2) plus accounting for the
// KV footprint of in-flight generation. Occupancy never exceeds capacity at
// event boundaries; the simulator resolves transient overshoot in the same
// event via eviction or preemption.
class CacheHierarchy {
 public:
  CacheHierarchy(int64_t l1_capacity, int64_t l2_capacity)
      : l1_(l1_capacity), l2_(l2_capacity) {}

  struct Match {
    int64_t l1 = 0, l2 = 0, l3 = 0;
  };
  Match lookup(const workflow::TokenSeq& prompt, const SharedL3* l3) const;

  TierStore& tier(Tier t);
  const TierStore& tier(Tier t) const;

  // Ensures blocks covering [0, upto) of the chain exist in `tier`,
  // touching/pinning the ones already present.
  void insert_chain(Tier t, const workflow::TokenSeq& tokens, int64_t upto,
                    const Lineage& lineage, double now, int pin_delta);
  void unpin_chain(const workflow::TokenSeq& tokens, int64_t upto);

  // In-flight generated tokens held in L1 alongside the block index.
  void add_decode_tokens(int64_t n) { decode_tokens_ += n; }
  int64_t decode_tokens() const { return decode_tokens_; }

  int64_t l1_occupancy() const { return l1_.occupancy() + decode_tokens_; }

  uint64_t* id_counter() { return &next_id_; }

 private:
  TierStore l1_;
  TierStore l2_;
  int64_t decode_tokens_ = 0;
  uint64_t next_id_ = 1;
};

}  // namespace pythia::cache
