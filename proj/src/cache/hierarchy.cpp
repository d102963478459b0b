// SPDX-License-Identifier: Apache-2.0

#include "pythia/cache/hierarchy.hpp"

#include <cassert>

namespace pythia::cache {

const char* tier_name(Tier t) {
  switch (t) {
    case Tier::L1:
      return "L1";
    case Tier::L2:
      return "L2";
    case Tier::L3:
      return "L3";
  }
  return "?";
}

std::vector<uint64_t> chain_boundary_hashes(const workflow::TokenSeq& tokens) {
  std::vector<uint64_t> hashes;
  uint64_t h = workflow::kFnvOffset;
  for (size_t i = 0; i < tokens.size(); ++i) {
    h = workflow::fnv1a(tokens[i], h);
    bool boundary = (i + 1) % kBlockTokens == 0 || i + 1 == tokens.size();
    if (boundary) hashes.push_back(h);
  }
  return hashes;
}

const CacheBlock* TierStore::find_chain(uint64_t chain_hash) const {
  auto it = by_chain_hash_.find(chain_hash);
  if (it == by_chain_hash_.end()) return nullptr;
  return &blocks_.at(it->second);
}

CacheBlock* TierStore::find_chain_mut(uint64_t chain_hash) {
  auto it = by_chain_hash_.find(chain_hash);
  if (it == by_chain_hash_.end()) return nullptr;
  return &blocks_.at(it->second);
}

uint64_t TierStore::put(uint64_t chain_hash, int64_t span_start, int64_t span_end,
                        const Lineage& lineage, double now, int pin_delta,
                        uint64_t* id_counter) {
  if (CacheBlock* existing = find_chain_mut(chain_hash)) {
    existing->last_access = now;
    existing->pin_count += pin_delta;
    assert(existing->pin_count >= 0);
    return existing->block_id;
  }
  CacheBlock block;
  block.block_id = (*id_counter)++;
  block.chain_hash = chain_hash;
  block.span_start = span_start;
  block.span_end = span_end;
  block.lineage = lineage;
  block.last_access = now;
  block.pin_count = std::max(pin_delta, 0);
  occupancy_ += block.size();
  by_chain_hash_[chain_hash] = block.block_id;
  by_span_start_.emplace(block.span_start, block.block_id);
  blocks_[block.block_id] = std::move(block);
  return blocks_.rbegin()->first;
}

void TierStore::erase(uint64_t block_id) {
  auto it = blocks_.find(block_id);
  if (it == blocks_.end()) return;
  assert(!it->second.pinned());
  occupancy_ -= it->second.size();
  by_chain_hash_.erase(it->second.chain_hash);
  auto [lo, hi] = by_span_start_.equal_range(it->second.span_start);
  for (auto sit = lo; sit != hi; ++sit) {
    if (sit->second == block_id) {
      by_span_start_.erase(sit);
      break;
    }
  }
  blocks_.erase(it);
}

int64_t TierStore::matched_prefix(const workflow::TokenSeq& tokens,
                                  const std::vector<uint64_t>& boundary_hashes) const {
  int64_t total = static_cast<int64_t>(tokens.size());
  int64_t matched = 0;
  for (size_t i = 0; i < boundary_hashes.size(); ++i) {
    if (!find_chain(boundary_hashes[i])) break;
    matched = std::min<int64_t>(static_cast<int64_t>(i + 1) * kBlockTokens, total);
  }
  if (matched >= total || matched % kBlockTokens != 0) return matched;
  // A shorter cached chain may end in a ragged block starting here.
  auto [lo, hi] = by_span_start_.equal_range(matched);
  int64_t best = matched;
  for (auto it = lo; it != hi; ++it) {
    const CacheBlock& b = blocks_.at(it->second);
    if (b.span_end > total || b.span_end % kBlockTokens == 0) continue;
    uint64_t h = workflow::kFnvOffset;
    for (int64_t t = 0; t < b.span_end; ++t) h = workflow::fnv1a(tokens[t], h);
    if (h == b.chain_hash) best = std::max(best, b.span_end);
  }
  return best;
}

TierStore& CacheHierarchy::tier(Tier t) { return t == Tier::L1 ? l1_ : l2_; }
const TierStore& CacheHierarchy::tier(Tier t) const { return t == Tier::L1 ? l1_ : l2_; }

CacheHierarchy::Match CacheHierarchy::lookup(const workflow::TokenSeq& prompt,
                                             const SharedL3* l3) const {
  Match m;
  auto hashes = chain_boundary_hashes(prompt);
  m.l1 = l1_.matched_prefix(prompt, hashes);
  m.l2 = l2_.matched_prefix(prompt, hashes);
  if (l3) m.l3 = l3->store().matched_prefix(prompt, hashes);
  return m;
}

void CacheHierarchy::insert_chain(Tier t, const workflow::TokenSeq& tokens, int64_t upto,
                                  const Lineage& lineage, double now, int pin_delta) {
  auto hashes = chain_boundary_hashes(tokens);
  TierStore& store = tier(t);
  int64_t total = static_cast<int64_t>(tokens.size());
  for (size_t i = 0; i < hashes.size(); ++i) {
    int64_t span_start = static_cast<int64_t>(i) * kBlockTokens;
    int64_t span_end = std::min<int64_t>(span_start + kBlockTokens, total);
    if (span_end > upto) break;
    store.put(hashes[i], span_start, span_end, lineage, now, pin_delta, &next_id_);
  }
}

void CacheHierarchy::unpin_chain(const workflow::TokenSeq& tokens, int64_t upto) {
  auto hashes = chain_boundary_hashes(tokens);
  int64_t total = static_cast<int64_t>(tokens.size());
  for (size_t i = 0; i < hashes.size(); ++i) {
    int64_t span_end = std::min<int64_t>(static_cast<int64_t>(i + 1) * kBlockTokens, total);
    if (span_end > upto) break;
    if (CacheBlock* b = l1_.find_chain_mut(hashes[i])) {
      if (b->pin_count > 0) b->pin_count -= 1;
    }
  }
}

}  // namespace pythia::cache
