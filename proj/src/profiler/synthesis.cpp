// SPDX-License-Identifier: Apache-2.0

#include "pythia/profiler/synthesis.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "pythia/profiler/stats.hpp"

namespace pythia::profiler {

using workflow::PathExpr;
using workflow::PathNode;
using workflow::PathNodePtr;

namespace {

struct Adjacency {
  // Outgoing non-self edges per state, most frequent first.
  std::map<std::string, std::vector<std::pair<std::string, int64_t>>> out;
};

Adjacency build_adjacency(const Pfa& pfa) {
  Adjacency adj;
  for (const auto& [edge, count] : pfa.transition_counts) {
    if (edge.first == edge.second) continue;
    adj.out[edge.first].emplace_back(edge.second, count);
  }
  for (auto& [state, edges] : adj.out) {
    (void)state;
    std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
  }
  return adj;
}

// Highest-frequency simple path START -> TERMINAL, found by preference-ordered
// depth-first search with backtracking.
bool find_primary_path(const Adjacency& adj, std::vector<std::string>& path,
                       std::set<std::string>& visited, const std::string& cur) {
  if (cur == kTerminal) return true;
  auto it = adj.out.find(cur);
  if (it == adj.out.end()) return false;
  for (const auto& [next, count] : it->second) {
    (void)count;
    if (visited.count(next)) continue;
    visited.insert(next);
    path.push_back(next);
    if (find_primary_path(adj, path, visited, next)) return true;
    path.pop_back();
    visited.erase(next);
  }
  return false;
}

// Percentile bounds for a count multiset.
std::pair<int, int> count_bounds(const std::vector<int>& counts, bool extreme) {
  if (extreme) {
    return {*std::min_element(counts.begin(), counts.end()),
            *std::max_element(counts.begin(), counts.end())};
  }
  return {nearest_rank_quantile(counts, 0.05), nearest_rank_quantile(counts, 0.95)};
}

// Estimated probability of one more repetition beyond the lower bound:
// continuations over continuation opportunities.
double continue_probability(const std::vector<int>& runs, int lower) {
  int64_t continuations = 0, stops = 0;
  for (int r : runs) {
    if (r >= lower) {
      continuations += r - lower;
      stops += 1;
    }
  }
  if (continuations + stops == 0) return 0.0;
  return static_cast<double>(continuations) / static_cast<double>(continuations + stops);
}

PathNodePtr decorate_role(const Pfa& pfa, const std::string& role, bool extreme_bounds) {
  PathNodePtr node = PathNode::atom(role);
  auto fan = pfa.fanout_sizes.find(role);
  if (fan != pfa.fanout_sizes.end() && !fan->second.empty()) {
    int lo = *std::min_element(fan->second.begin(), fan->second.end());
    int hi = *std::max_element(fan->second.begin(), fan->second.end());
    node = PathNode::fanout(node, lo, hi);
  }
  auto runs = pfa.repetition_runs.find(role);
  if (runs != pfa.repetition_runs.end() && !runs->second.empty()) {
    int lo, hi;
    if (extreme_bounds) {
      lo = *std::min_element(runs->second.begin(), runs->second.end());
      hi = *std::max_element(runs->second.begin(), runs->second.end());
    } else {
      lo = nearest_rank_quantile(runs->second, 0.05);
      hi = nearest_rank_quantile(runs->second, 0.95);
    }
    if (hi >= 2) {
      node = PathNode::repeat(node, std::max(lo, 1), hi,
                              continue_probability(runs->second, std::max(lo, 1)));
    }
  }
  return node;
}

struct ChainItem {
  PathNodePtr node;
  int lo = -1, hi = -1;  // covered primary-path positions; -1 for inserted loops
};

PathExpr assemble(std::vector<ChainItem> items) {
  std::vector<PathNodePtr> children;
  children.reserve(items.size() + 1);
  for (auto& item : items) children.push_back(std::move(item.node));
  children.push_back(PathNode::terminal());
  return PathExpr(PathNode::seq(std::move(children)));
}

}  // namespace

SynthesisResult synthesize_regex(const Pfa& pfa, const SynthesisOptions& opts) {
  Adjacency adj = build_adjacency(pfa);
  std::vector<std::string> path;
  std::set<std::string> visited{kStart};
  if (!find_primary_path(adj, path, visited, kStart)) {
    throw std::invalid_argument("pfa has no START->TERMINAL path");
  }
  path.pop_back();  // drop TERMINAL
  if (path.empty()) throw std::invalid_argument("pfa path has no roles");

  std::map<std::string, int> pos;
  for (size_t i = 0; i < path.size(); ++i) pos[path[i]] = static_cast<int>(i);

  std::vector<ChainItem> items;
  items.reserve(path.size());
  for (size_t i = 0; i < path.size(); ++i) {
    items.push_back({decorate_role(pfa, path[i], opts.extreme_bounds), static_cast<int>(i),
                     static_cast<int>(i)});
  }

  auto flat = [&](std::vector<ChainItem> chain) {
    SynthesisResult r{assemble(std::move(chain)), true};
    return r;
  };
  if (opts.flat_chain) return flat(std::move(items));

  // Positions for the sentinels: START sits before the chain, TERMINAL after.
  auto pos_of = [&](const std::string& s) -> std::optional<int> {
    if (s == kStart) return -1;
    if (s == kTerminal) return static_cast<int>(path.size());
    auto it = pos.find(s);
    if (it == pos.end()) return std::nullopt;
    return it->second;
  };

  struct Extra {
    int from, to;
    std::string u, v;
  };
  std::vector<Extra> backward, skips;
  for (const auto& [edge, count] : pfa.transition_counts) {
    (void)count;
    if (edge.first == edge.second) continue;  // self-loop, handled by Repeat
    auto pu = pos_of(edge.first), pv = pos_of(edge.second);
    if (!pu || !pv) return flat(std::move(items));  // off-chain state: not expressible
    if (*pv == *pu + 1) continue;                   // chain edge
    if (*pv <= *pu) {
      backward.push_back({*pu, *pv, edge.first, edge.second});
    } else {
      skips.push_back({*pu, *pv, edge.first, edge.second});
    }
  }

  // Forward skips first: wrap each skipped segment in an Optional. Segments
  // must cover whole items (nesting allowed, partial overlap is not).
  std::sort(skips.begin(), skips.end(), [](const Extra& a, const Extra& b) {
    int la = a.to - a.from, lb = b.to - b.from;
    if (la != lb) return la < lb;  // innermost first so outer skips nest
    return a.from < b.from;
  });
  for (const auto& s : skips) {
    int range_lo = s.from + 1, range_hi = s.to - 1;
    size_t first = items.size(), last = items.size();
    for (size_t i = 0; i < items.size(); ++i) {
      if (items[i].lo == range_lo) first = i;
      if (items[i].hi == range_hi) last = i;
    }
    if (first >= items.size() || last >= items.size() || first > last) {
      return flat(std::move(items));
    }
    std::vector<PathNodePtr> inner;
    for (size_t i = first; i <= last; ++i) {
      if (items[i].lo < range_lo || items[i].hi > range_hi) return flat(std::move(items));
      inner.push_back(items[i].node);
    }
    double c_next = 0.0, c_skip = 0.0;
    for (const auto& [e, c] : pfa.transition_counts) {
      if (e.first != s.u) continue;
      auto pv = pos_of(e.second);
      if (pv && *pv == s.from + 1) c_next = static_cast<double>(c);
      if (e.second == s.v) c_skip = static_cast<double>(c);
    }
    double p_take = (c_next + c_skip) > 0.0 ? c_next / (c_next + c_skip) : 0.5;
    PathNodePtr wrapped =
        PathNode::optional(inner.size() == 1 ? inner[0] : PathNode::seq(std::move(inner)), p_take);
    ChainItem merged{wrapped, range_lo, range_hi};
    items.erase(items.begin() + first, items.begin() + last + 1);
    items.insert(items.begin() + first, std::move(merged));
  }

  // Backward edges, rightmost source first so indices stay valid. A rare
  // retry edge (probability < 0.5) becomes a one-level optional replay of the
  // looped segment; a dominant loop edge becomes a bounded Repeat of the
  // whole segment, bounded by how often its entry role recurs per trace.
  std::sort(backward.begin(), backward.end(), [](const Extra& a, const Extra& b) {
    if (a.from != b.from) return a.from > b.from;
    return a.to > b.to;
  });
  for (const auto& bwd : backward) {
    size_t first = items.size(), last = items.size();
    for (size_t i = 0; i < items.size(); ++i) {
      if (items[i].lo == bwd.to) first = i;
      if (items[i].hi == bwd.from) last = i;
    }
    if (first >= items.size() || last >= items.size() || first > last) {
      return flat(std::move(items));
    }
    std::vector<PathNodePtr> segment;
    for (size_t i = first; i <= last; ++i) {
      if (items[i].lo < 0) return flat(std::move(items));
      segment.push_back(items[i].node);
    }
    double p_loop = pfa.probability(bwd.u, bwd.v);
    PathNodePtr seg_node = segment.size() == 1 ? segment[0] : PathNode::seq(std::move(segment));
    if (p_loop < 0.5) {
      PathNodePtr replay = PathNode::optional(seg_node, p_loop);
      items.insert(items.begin() + last + 1, ChainItem{replay, -1, -1});
      continue;
    }
    auto visits = pfa.visit_counts.find(bwd.v);
    if (visits == pfa.visit_counts.end() || visits->second.empty()) {
      return flat(std::move(items));
    }
    auto [lo, hi] = count_bounds(visits->second, opts.extreme_bounds);
    lo = std::max(lo, 1);
    hi = std::max(hi, lo);
    ChainItem merged{PathNode::repeat(seg_node, lo, hi,
                                      continue_probability(visits->second, lo)),
                     items[first].lo, items[last].hi};
    items.erase(items.begin() + first, items.begin() + last + 1);
    items.insert(items.begin() + first, std::move(merged));
  }

  return {assemble(std::move(items)), false};
}

}  // namespace pythia::profiler
