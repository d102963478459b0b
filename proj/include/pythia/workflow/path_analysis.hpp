// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pythia/workflow/path_expr.hpp"

namespace pythia::workflow {

// Probability conventions shared by every consumer of path expressions:
//  - Repeat iteration counts follow a truncated geometric law: given min
//    iterations, each further iteration is taken with p_continue, capped
//    at max.
//  - ParallelFanout sibling counts are uniform on [min, max]; siblings are
//    serialized consecutively for language membership and advance in
//    lockstep for step-horizon projections.
//  - Optional branches are taken with probability p.

// A cursor addresses one atom invocation inside an expression: the chain of
// structure frames from the root to the atom, with per-frame progress
// (child index for Seq, 0-based iteration for Repeat, 0-based sibling
// ordinal for ParallelFanout). Cursors are value types and order totally
// (lexicographic on frames), which fixes a canonical pick when a trace
// prefix matches at several places.
struct CursorFrame {
  const PathNode* node;
  int progress;

  friend bool operator==(const CursorFrame& a, const CursorFrame& b) = default;
};

class PathCursor {
 public:
  PathCursor() = default;
  PathCursor(const PathExpr* expr, std::vector<CursorFrame> frames)
      : expr_(expr), frames_(std::move(frames)) {}

  const PathExpr* expr() const { return expr_; }
  const std::vector<CursorFrame>& frames() const { return frames_; }

  // Role of the atom the cursor addresses.
  const std::string& role() const;

  friend bool operator==(const PathCursor& a, const PathCursor& b) {
    return a.frames_ == b.frames_;
  }

 private:
  const PathExpr* expr_ = nullptr;
  std::vector<CursorFrame> frames_;  // root frame first, atom frame last
};

// All atoms that can be the first invocation of the expression, each with the
// probability of the epsilon-path leading to it.
std::vector<std::pair<PathCursor, double>> initial_cursors(const PathExpr& expr);

// All atoms that can follow `from` as the next invocation. The probability
// weights the structural choices (optional taken/skipped, repeat continued
// or stopped, fanout sibling continued) along the way. An empty role marks
// completion (Terminal reached); completion cursors have empty frames.
struct CursorStep {
  PathCursor to;
  double probability;
  bool complete;  // Terminal reached; `to` is unusable
};
std::vector<CursorStep> cursor_successors(const PathCursor& from);

// True iff `trace` is a word of the expression's language (zero-probability
// branches excluded). Fanout siblings match as consecutive copies.
bool match_trace(const PathExpr& expr, const std::vector<std::string>& trace);

// Advances a cursor set by one consumed role; used to locate a request's
// position from the workflow's invocation history. Returns all distinct
// consistent cursors in canonical order.
std::vector<PathCursor> advance_cursors(const PathExpr& expr,
                                        const std::vector<PathCursor>& froms,
                                        const std::string& role);

// Locates the position reached after consuming `history` from the start.
// Empty optional when the history is not a prefix of any word.
std::optional<PathCursor> locate_position(const PathExpr& expr,
                                          const std::vector<std::string>& history);

// The exact remaining computation after the cursor's invocation completes,
// as a standalone expression (ending in Terminal). Remaining Repeat
// iterations keep the truncated-geometric law via shifted bounds; remaining
// fanout siblings of the cursor's own group are excluded (peers run
// concurrently and are not future work of this request).
PathExpr remaining_expr(const PathCursor& cursor);

// Expected number of atom invocations in one draw of the expression.
double expected_invocations(const PathExpr& expr);

// Expected invocations still owed by the request at `cursor`, counting the
// current invocation itself; always >= 1.
double expected_remaining_invocations(const PathCursor& cursor);

// Roles that occur with positive probability in the remaining structure
// (excludes the current invocation).
std::set<std::string> future_roles(const PathCursor& cursor);

// Expected invocation distance from the cursor to the first future
// invocation of `role`; the immediate successor has distance 1. The
// expectation conditions on the role occurring at all; nullopt when it is
// unreachable.
std::optional<double> expected_distance_to(const PathCursor& cursor, const std::string& role);

// Expected invocations per role within the next `horizon` wall steps after
// the cursor's invocation. A fanout group advances in lockstep: its child
// contributes one step per child step, with invocation counts scaled by the
// expected sibling count.
std::map<std::string, double> project_horizon(const PathCursor& cursor, int horizon);

// Same projection over a whole expression from its start (used before the
// first invocation exists).
std::map<std::string, double> project_horizon(const PathExpr& expr, int horizon);

// All roles mentioned anywhere in the expression.
std::set<std::string> all_roles(const PathExpr& expr);

}  // namespace pythia::workflow
