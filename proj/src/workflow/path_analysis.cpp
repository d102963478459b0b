// SPDX-License-Identifier: Apache-2.0

#include "pythia/workflow/path_analysis.hpp"

#include <algorithm>
#include <cassert>
#include <unordered_map>

namespace pythia::workflow {

namespace {

// Probability that a uniform-[a,b] count reaches s+1 given it reached s.
double fanout_continue_prob(int a, int b, int done) {
  if (done < a) return 1.0;
  if (done >= b) return 0.0;
  return static_cast<double>(b - done) / static_cast<double>(b - done + 1);
}

double repeat_continue_prob(int m, int max, double q, int done) {
  if (done < m) return 1.0;
  if (done >= max) return 0.0;
  return q;
}

struct Emitter {
  std::vector<CursorStep>* out;
  const PathExpr* expr;

  void emit_atom(const std::vector<CursorFrame>& frames, double p) {
    if (p <= 0.0) return;
    out->push_back({PathCursor(expr, frames), p, false});
  }
  void emit_complete(double p) {
    if (p <= 0.0) return;
    out->push_back({PathCursor(), p, true});
  }
};

// Walks into `node` looking for its first atom invocation along every
// stochastic path. Emits one CursorStep per reachable atom and returns the
// probability that the node completes without any invocation.
double descend(const PathNodePtr& node, std::vector<CursorFrame>& frames, double p,
               Emitter& em) {
  if (p <= 0.0) return 0.0;
  switch (node->kind) {
    case PathKind::Terminal:
      return 1.0;
    case PathKind::Atom:
      frames.push_back({node.get(), 0});
      em.emit_atom(frames, p);
      frames.pop_back();
      return 0.0;
    case PathKind::Seq: {
      double through = 1.0;
      for (size_t i = 0; i < node->children.size() && through > 0.0; ++i) {
        frames.push_back({node.get(), static_cast<int>(i)});
        through *= descend(node->children[i], frames, p * through, em);
        frames.pop_back();
      }
      return through;
    }
    case PathKind::Optional: {
      frames.push_back({node.get(), 0});
      double empty_taken = descend(node->child, frames, p * node->p, em);
      frames.pop_back();
      return (1.0 - node->p) + node->p * empty_taken;
    }
    case PathKind::Repeat:
    case PathKind::ParallelFanout: {
      const bool is_repeat = node->kind == PathKind::Repeat;
      double through = 1.0;  // no-invocation flow, relative to p
      double empty = 0.0;
      for (int done = 0; done <= node->max && through > 0.0; ++done) {
        double cont = is_repeat
                          ? repeat_continue_prob(node->min, node->max, node->p_continue, done)
                          : fanout_continue_prob(node->min, node->max, done);
        empty += through * (1.0 - cont);
        if (cont <= 0.0) {
          through = 0.0;
          break;
        }
        frames.push_back({node.get(), done});
        double child_empty = descend(node->child, frames, p * through * cont, em);
        frames.pop_back();
        through *= cont * child_empty;
      }
      return empty;
    }
  }
  return 0.0;
}

// Resumes the walk after the frame stack's innermost structure finished one
// unit of progress (an atom completed, or an inner structure drained).
void resume(std::vector<CursorFrame> frames, double p, Emitter& em) {
  while (!frames.empty() && p > 0.0) {
    CursorFrame f = frames.back();
    frames.pop_back();
    switch (f.node->kind) {
      case PathKind::Seq: {
        double through = 1.0;
        for (size_t i = f.progress + 1; i < f.node->children.size() && through > 0.0; ++i) {
          frames.push_back({f.node, static_cast<int>(i)});
          auto& child = f.node->children[i];
          // Re-wrap into a PathNodePtr-compatible call: children are stored
          // as shared_ptr already.
          through *= descend(child, frames, p * through, em);
          frames.pop_back();
        }
        p *= through;
        break;
      }
      case PathKind::Repeat:
      case PathKind::ParallelFanout: {
        const bool is_repeat = f.node->kind == PathKind::Repeat;
        double through = 1.0;
        double empty = 0.0;
        for (int done = f.progress + 1; done <= f.node->max && through > 0.0; ++done) {
          double cont =
              is_repeat ? repeat_continue_prob(f.node->min, f.node->max, f.node->p_continue, done)
                        : fanout_continue_prob(f.node->min, f.node->max, done);
          empty += through * (1.0 - cont);
          if (cont <= 0.0) {
            through = 0.0;
            break;
          }
          frames.push_back({f.node, done});
          double child_empty = descend(f.node->child, frames, p * through * cont, em);
          frames.pop_back();
          through *= cont * child_empty;
        }
        p *= empty;
        break;
      }
      case PathKind::Optional:
        break;  // child finished; the option is spent
      case PathKind::Atom:
      case PathKind::Terminal:
        break;  // atom frame itself; nothing to resume
    }
  }
  if (p > 0.0) em.emit_complete(p);
}

std::unordered_map<const PathNode*, int> preorder_ids(const PathNodePtr& root) {
  std::unordered_map<const PathNode*, int> ids;
  int next = 0;
  std::vector<const PathNode*> stack{root.get()};
  while (!stack.empty()) {
    const PathNode* n = stack.back();
    stack.pop_back();
    ids[n] = next++;
    if (n->child) stack.push_back(n->child.get());
    for (auto it = n->children.rbegin(); it != n->children.rend(); ++it) {
      stack.push_back(it->get());
    }
  }
  return ids;
}

std::vector<std::pair<int, int>> cursor_key(const PathCursor& c) {
  std::vector<std::pair<int, int>> key;
  if (!c.expr() || c.frames().empty()) return key;
  auto ids = preorder_ids(c.expr()->root());
  key.reserve(c.frames().size());
  for (const auto& f : c.frames()) key.emplace_back(ids.at(f.node), f.progress);
  return key;
}

void sort_and_dedup(std::vector<PathCursor>& cursors) {
  std::sort(cursors.begin(), cursors.end(),
            [](const PathCursor& a, const PathCursor& b) { return cursor_key(a) < cursor_key(b); });
  cursors.erase(std::unique(cursors.begin(), cursors.end()), cursors.end());
}

}  // namespace

const std::string& PathCursor::role() const {
  assert(!frames_.empty() && frames_.back().node->kind == PathKind::Atom);
  return frames_.back().node->role_id;
}

std::vector<std::pair<PathCursor, double>> initial_cursors(const PathExpr& expr) {
  std::vector<CursorStep> steps;
  Emitter em{&steps, &expr};
  std::vector<CursorFrame> frames;
  double empty = descend(expr.root(), frames, 1.0, em);
  (void)empty;  // an expression can complete without invocations only as Seq[Terminal]
  std::vector<std::pair<PathCursor, double>> out;
  out.reserve(steps.size());
  for (auto& s : steps) out.emplace_back(std::move(s.to), s.probability);
  return out;
}

std::vector<CursorStep> cursor_successors(const PathCursor& from) {
  std::vector<CursorStep> steps;
  Emitter em{&steps, from.expr()};
  resume(from.frames(), 1.0, em);
  return steps;
}

bool match_trace(const PathExpr& expr, const std::vector<std::string>& trace) {
  if (trace.empty()) {
    std::vector<CursorStep> sink;
    Emitter em{&sink, &expr};
    std::vector<CursorFrame> frames;
    return descend(expr.root(), frames, 1.0, em) > 0.0;
  }
  std::vector<PathCursor> current;
  for (auto& [cursor, p] : initial_cursors(expr)) {
    if (p > 0.0 && cursor.role() == trace[0]) current.push_back(cursor);
  }
  sort_and_dedup(current);
  for (size_t i = 1; i < trace.size() && !current.empty(); ++i) {
    current = advance_cursors(expr, current, trace[i]);
  }
  for (const auto& c : current) {
    for (const auto& s : cursor_successors(c)) {
      if (s.complete) return true;
    }
  }
  return false;
}

std::vector<PathCursor> advance_cursors(const PathExpr& expr,
                                        const std::vector<PathCursor>& froms,
                                        const std::string& role) {
  (void)expr;
  std::vector<PathCursor> next;
  for (const auto& c : froms) {
    for (auto& s : cursor_successors(c)) {
      if (!s.complete && s.probability > 0.0 && s.to.role() == role) {
        next.push_back(std::move(s.to));
      }
    }
  }
  sort_and_dedup(next);
  return next;
}

std::optional<PathCursor> locate_position(const PathExpr& expr,
                                          const std::vector<std::string>& history) {
  if (history.empty()) return std::nullopt;
  std::vector<PathCursor> current;
  for (auto& [cursor, p] : initial_cursors(expr)) {
    if (p > 0.0 && cursor.role() == history[0]) current.push_back(cursor);
  }
  sort_and_dedup(current);
  for (size_t i = 1; i < history.size() && !current.empty(); ++i) {
    current = advance_cursors(expr, current, history[i]);
  }
  if (current.empty()) return std::nullopt;
  return current.front();  // canonical: smallest structural key
}

PathExpr remaining_expr(const PathCursor& cursor) {
  const auto& frames = cursor.frames();
  assert(!frames.empty() && frames.back().node->kind == PathKind::Atom);
  std::vector<PathNodePtr> pieces;
  // Skip the atom frame; unwind inner structures first.
  for (size_t idx = frames.size() - 1; idx-- > 0;) {
    const CursorFrame& f = frames[idx];
    switch (f.node->kind) {
      case PathKind::Seq:
        for (size_t i = f.progress + 1; i < f.node->children.size(); ++i) {
          pieces.push_back(f.node->children[i]);
        }
        break;
      case PathKind::Repeat: {
        int done = f.progress + 1;
        int rem_max = f.node->max - done;
        if (rem_max > 0) {
          int rem_min = std::max(f.node->min - done, 0);
          pieces.push_back(
              PathNode::repeat(f.node->child, rem_min, rem_max, f.node->p_continue));
        }
        break;
      }
      case PathKind::ParallelFanout:
        break;  // concurrent siblings are not this request's future work
      case PathKind::Optional:
      case PathKind::Atom:
      case PathKind::Terminal:
        break;
    }
  }
  assert(!pieces.empty() && pieces.back()->kind == PathKind::Terminal);
  return PathExpr(PathNode::seq(std::move(pieces)));
}

namespace {

double expected_count(const PathNodePtr& node);

double expected_repeat_iterations(int m, int max, double q) {
  double e = m;
  double tail = 1.0;
  for (int j = 1; j <= max - m; ++j) {
    tail *= q;
    e += tail;
  }
  return e;
}

double expected_count(const PathNodePtr& node) {
  switch (node->kind) {
    case PathKind::Terminal:
      return 0.0;
    case PathKind::Atom:
      return 1.0;
    case PathKind::Seq: {
      double s = 0.0;
      for (const auto& c : node->children) s += expected_count(c);
      return s;
    }
    case PathKind::Optional:
      return node->p * expected_count(node->child);
    case PathKind::Repeat:
      return expected_repeat_iterations(node->min, node->max, node->p_continue) *
             expected_count(node->child);
    case PathKind::ParallelFanout:
      return 0.5 * (node->min + node->max) * expected_count(node->child);
  }
  return 0.0;
}

}  // namespace

double expected_invocations(const PathExpr& expr) { return expected_count(expr.root()); }

double expected_remaining_invocations(const PathCursor& cursor) {
  return 1.0 + expected_invocations(remaining_expr(cursor));
}

namespace {

void collect_reachable(const PathNodePtr& node, std::set<std::string>& out) {
  switch (node->kind) {
    case PathKind::Terminal:
      return;
    case PathKind::Atom:
      out.insert(node->role_id);
      return;
    case PathKind::Seq:
      for (const auto& c : node->children) collect_reachable(c, out);
      return;
    case PathKind::Optional:
      if (node->p > 0.0) collect_reachable(node->child, out);
      return;
    case PathKind::Repeat:
      if (node->max >= 1 && (node->min >= 1 || node->p_continue > 0.0)) {
        collect_reachable(node->child, out);
      }
      return;
    case PathKind::ParallelFanout:
      if (node->max >= 1) collect_reachable(node->child, out);
      return;
  }
}

void collect_all(const PathNodePtr& node, std::set<std::string>& out) {
  if (node->kind == PathKind::Atom) out.insert(node->role_id);
  if (node->child) collect_all(node->child, out);
  for (const auto& c : node->children) collect_all(c, out);
}

// Summary of where a role first occurs in one draw of a node:
//   p_none        probability the draw contains no occurrence
//   e_len_none    expected invocation count of the draw, given none
//   p_some        1 - p_none
//   e_first       expected 1-based index of the first occurrence, given some
struct FirstOcc {
  double p_none = 1.0;
  double e_len_none = 0.0;
  double p_some = 0.0;
  double e_first = 0.0;
};

FirstOcc seq_compose(const FirstOcc& a, const FirstOcc& b) {
  FirstOcc r;
  r.p_some = a.p_some + a.p_none * b.p_some;
  if (r.p_some > 0.0) {
    r.e_first = (a.p_some * a.e_first +
                 a.p_none * b.p_some * (a.e_len_none + b.e_first)) /
                r.p_some;
  }
  r.p_none = a.p_none * b.p_none;
  r.e_len_none = r.p_none > 0.0 ? a.e_len_none + b.e_len_none : 0.0;
  return r;
}

FirstOcc mix(const std::vector<std::pair<double, FirstOcc>>& branches) {
  FirstOcc r;
  r.p_none = 0.0;
  double first_acc = 0.0, none_len_acc = 0.0;
  for (const auto& [w, occ] : branches) {
    r.p_some += w * occ.p_some;
    first_acc += w * occ.p_some * occ.e_first;
    r.p_none += w * occ.p_none;
    none_len_acc += w * occ.p_none * occ.e_len_none;
  }
  if (r.p_some > 0.0) r.e_first = first_acc / r.p_some;
  if (r.p_none > 0.0) r.e_len_none = none_len_acc / r.p_none;
  return r;
}

FirstOcc first_occurrence(const PathNodePtr& node, const std::string& role) {
  switch (node->kind) {
    case PathKind::Terminal:
      return {};
    case PathKind::Atom:
      if (node->role_id == role) return {0.0, 0.0, 1.0, 1.0};
      return {1.0, 1.0, 0.0, 0.0};
    case PathKind::Seq: {
      FirstOcc acc;
      for (const auto& c : node->children) acc = seq_compose(acc, first_occurrence(c, role));
      return acc;
    }
    case PathKind::Optional: {
      return mix({{1.0 - node->p, FirstOcc{}}, {node->p, first_occurrence(node->child, role)}});
    }
    case PathKind::Repeat:
    case PathKind::ParallelFanout: {
      const bool is_repeat = node->kind == PathKind::Repeat;
      FirstOcc child = first_occurrence(node->child, role);
      std::vector<std::pair<double, FirstOcc>> branches;
      FirstOcc prefix;  // identity: zero copies
      double reach = 1.0;
      for (int done = 0; done <= node->max; ++done) {
        double cont = is_repeat
                          ? repeat_continue_prob(node->min, node->max, node->p_continue, done)
                          : fanout_continue_prob(node->min, node->max, done);
        double stop = reach * (1.0 - cont);
        if (stop > 0.0) branches.emplace_back(stop, prefix);
        reach *= cont;
        if (reach <= 0.0) break;
        prefix = seq_compose(prefix, child);
      }
      return mix(branches);
    }
  }
  return {};
}

// Expected per-role invocation counts within the first `budget` wall steps
// of a node, plus the distribution of steps consumed (capped at budget).
struct StepProfile {
  std::vector<double> consumed;       // index s: P(consumes exactly s steps), s in [0, budget]
  std::map<std::string, double> counts;
};

StepProfile step_identity(int budget) {
  StepProfile p;
  p.consumed.assign(budget + 1, 0.0);
  p.consumed[0] = 1.0;
  return p;
}

void add_counts(std::map<std::string, double>& into, const std::map<std::string, double>& from,
                double w) {
  if (w <= 0.0) return;
  for (const auto& [k, v] : from) into[k] += w * v;
}

StepProfile step_eval(const PathNodePtr& node, int budget);

StepProfile step_append(const StepProfile& acc, const PathNodePtr& child, int budget) {
  StepProfile r;
  r.consumed.assign(budget + 1, 0.0);
  r.counts = acc.counts;
  for (int s = 0; s <= budget; ++s) {
    double w = acc.consumed[s];
    if (w <= 0.0) continue;
    StepProfile sub = step_eval(child, budget - s);
    add_counts(r.counts, sub.counts, w);
    for (int t = 0; t <= budget - s; ++t) {
      r.consumed[std::min(s + t, budget)] += w * sub.consumed[t];
    }
  }
  return r;
}

StepProfile step_eval(const PathNodePtr& node, int budget) {
  if (budget <= 0) return step_identity(0);
  switch (node->kind) {
    case PathKind::Terminal:
      return step_identity(budget);
    case PathKind::Atom: {
      StepProfile p;
      p.consumed.assign(budget + 1, 0.0);
      p.consumed[1] = 1.0;
      p.counts[node->role_id] = 1.0;
      return p;
    }
    case PathKind::Seq: {
      StepProfile acc = step_identity(budget);
      for (const auto& c : node->children) acc = step_append(acc, c, budget);
      return acc;
    }
    case PathKind::Optional: {
      StepProfile taken = step_eval(node->child, budget);
      StepProfile r = step_identity(budget);
      r.consumed[0] = 1.0 - node->p;
      for (int t = 0; t <= budget; ++t) r.consumed[t] += node->p * taken.consumed[t];
      add_counts(r.counts, taken.counts, node->p);
      return r;
    }
    case PathKind::Repeat: {
      StepProfile r;
      r.consumed.assign(budget + 1, 0.0);
      StepProfile prefix = step_identity(budget);
      double reach = 1.0;
      for (int done = 0; done <= node->max; ++done) {
        double cont = repeat_continue_prob(node->min, node->max, node->p_continue, done);
        double stop = reach * (1.0 - cont);
        if (stop > 0.0) {
          for (int t = 0; t <= budget; ++t) r.consumed[t] += stop * prefix.consumed[t];
          add_counts(r.counts, prefix.counts, stop);
        }
        reach *= cont;
        if (reach <= 0.0) break;
        prefix = step_append(prefix, node->child, budget);
      }
      return r;
    }
    case PathKind::ParallelFanout: {
      // Lockstep convention: the group spans one child's worth of steps with
      // counts scaled by the expected sibling count.
      StepProfile child = step_eval(node->child, budget);
      StepProfile r;
      r.consumed.assign(budget + 1, 0.0);
      double span = node->min + node->max;
      double e_k = 0.5 * span;
      double p_zero = node->min == 0 ? 1.0 / (node->max - node->min + 1) : 0.0;
      r.consumed[0] += p_zero;
      for (int t = 0; t <= budget; ++t) r.consumed[t] += (1.0 - p_zero) * child.consumed[t];
      add_counts(r.counts, child.counts, e_k);
      return r;
    }
  }
  return step_identity(budget);
}

}  // namespace

std::set<std::string> future_roles(const PathCursor& cursor) {
  std::set<std::string> out;
  collect_reachable(remaining_expr(cursor).root(), out);
  return out;
}

std::optional<double> expected_distance_to(const PathCursor& cursor, const std::string& role) {
  FirstOcc occ = first_occurrence(remaining_expr(cursor).root(), role);
  if (occ.p_some <= 0.0) return std::nullopt;
  return occ.e_first;
}

std::map<std::string, double> project_horizon(const PathCursor& cursor, int horizon) {
  return project_horizon(remaining_expr(cursor), horizon);
}

std::map<std::string, double> project_horizon(const PathExpr& expr, int horizon) {
  if (horizon <= 0) return {};
  return step_eval(expr.root(), horizon).counts;
}

std::set<std::string> all_roles(const PathExpr& expr) {
  std::set<std::string> out;
  collect_all(expr.root(), out);
  return out;
}

}  // namespace pythia::workflow
