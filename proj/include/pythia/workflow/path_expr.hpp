// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pythia::workflow {

// A bounded probabilistic path expression over agent roles. Nodes are
// immutable after construction; trees are shared freely across threads.
//
// Textual grammar (canonical emission uses "^{a,b}" and always parenthesizes
// repeat/fan-out groups):
//   expr  := seq
//   seq   := term (" -> " term)*
//   term  := atom quant? | "(" seq ")" quant?
//   quant := "^{" INT ("," | "-") INT "}" | "^{||" INT "," INT "}" | "?"
//   atom  := IDENT | "terminal"
// A single-count quantifier "^{k}" / "^{||k}" is accepted as min = max = k.

class PathNode;
using PathNodePtr = std::shared_ptr<const PathNode>;

enum class PathKind { Atom, Seq, Repeat, ParallelFanout, Optional, Terminal };

class PathNode {
 public:
  PathKind kind;
  std::string role_id;               // Atom
  std::vector<PathNodePtr> children; // Seq
  PathNodePtr child;                 // Repeat / ParallelFanout / Optional
  int min = 0;
  int max = 0;
  double p_continue = 0.5; // Repeat: P(one more iteration | min reached)
  double p = 0.5;          // Optional: P(branch taken)

  static PathNodePtr atom(std::string role);
  static PathNodePtr terminal();
  static PathNodePtr seq(std::vector<PathNodePtr> children);
  static PathNodePtr repeat(PathNodePtr child, int min, int max, double p_continue = 0.5);
  static PathNodePtr fanout(PathNodePtr child, int min, int max);
  static PathNodePtr optional(PathNodePtr child, double p = 0.5);
};

bool operator==(const PathNode& a, const PathNode& b);
inline bool operator!=(const PathNode& a, const PathNode& b) { return !(a == b); }

// Wrapper owning a validated expression. The root is always a Seq whose last
// element is the unique Terminal node.
class PathExpr {
 public:
  PathExpr() = default;
  explicit PathExpr(PathNodePtr root);

  const PathNodePtr& root() const { return root_; }
  bool empty() const { return root_ == nullptr; }

  friend bool operator==(const PathExpr& a, const PathExpr& b);

 private:
  PathNodePtr root_;
};

inline bool operator!=(const PathExpr& a, const PathExpr& b) { return !(a == b); }

struct ParseError : std::runtime_error {
  ParseError(std::string message, size_t offset);
  size_t offset; // byte offset into the input where the error was detected
};

// Parses the textual form. Probabilities are not representable in text and
// default to 0.5. Throws ParseError (with byte offset) on malformed input,
// a missing terminal, or min > max.
PathExpr parse_path_expr(std::string_view text);

// Canonical textual form; round-trips through parse_path_expr.
std::string path_expr_to_text(const PathExpr& expr);

// Structural validity check used by PathExpr's constructor: bounds ordered,
// probabilities in [0,1], exactly one Terminal as the final element of the
// root Seq. Throws std::invalid_argument on violation.
void validate_path_expr(const PathNodePtr& root);

}  // namespace pythia::workflow
