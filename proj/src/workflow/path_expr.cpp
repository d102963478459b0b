// SPDX-License-Identifier: Apache-2.0

#include "pythia/workflow/path_expr.hpp"

#include <cctype>
#include <sstream>

namespace pythia::workflow {

PathNodePtr PathNode::atom(std::string role) {
  auto n = std::make_shared<PathNode>();
  n->kind = PathKind::Atom;
  n->role_id = std::move(role);
  return n;
}

PathNodePtr PathNode::terminal() {
  auto n = std::make_shared<PathNode>();
  n->kind = PathKind::Terminal;
  return n;
}

PathNodePtr PathNode::seq(std::vector<PathNodePtr> children) {
  auto n = std::make_shared<PathNode>();
  n->kind = PathKind::Seq;
  // Directly nested seqs flatten; the textual form cannot distinguish them.
  for (auto& c : children) {
    if (c && c->kind == PathKind::Seq) {
      for (const auto& gc : c->children) n->children.push_back(gc);
    } else {
      n->children.push_back(std::move(c));
    }
  }
  return n;
}

PathNodePtr PathNode::repeat(PathNodePtr child, int min, int max, double p_continue) {
  auto n = std::make_shared<PathNode>();
  n->kind = PathKind::Repeat;
  n->child = std::move(child);
  n->min = min;
  n->max = max;
  n->p_continue = p_continue;
  return n;
}

PathNodePtr PathNode::fanout(PathNodePtr child, int min, int max) {
  auto n = std::make_shared<PathNode>();
  n->kind = PathKind::ParallelFanout;
  n->child = std::move(child);
  n->min = min;
  n->max = max;
  return n;
}

PathNodePtr PathNode::optional(PathNodePtr child, double p) {
  auto n = std::make_shared<PathNode>();
  n->kind = PathKind::Optional;
  n->child = std::move(child);
  n->p = p;
  return n;
}

bool operator==(const PathNode& a, const PathNode& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case PathKind::Terminal:
      return true;
    case PathKind::Atom:
      return a.role_id == b.role_id;
    case PathKind::Seq: {
      if (a.children.size() != b.children.size()) return false;
      for (size_t i = 0; i < a.children.size(); ++i) {
        if (!(*a.children[i] == *b.children[i])) return false;
      }
      return true;
    }
    case PathKind::Repeat:
      return a.min == b.min && a.max == b.max && a.p_continue == b.p_continue &&
             *a.child == *b.child;
    case PathKind::ParallelFanout:
      return a.min == b.min && a.max == b.max && *a.child == *b.child;
    case PathKind::Optional:
      return a.p == b.p && *a.child == *b.child;
  }
  return false;
}

bool operator==(const PathExpr& a, const PathExpr& b) {
  if (a.root_ == b.root_) return true;
  if (!a.root_ || !b.root_) return false;
  return *a.root_ == *b.root_;
}

ParseError::ParseError(std::string message, size_t off)
    : std::runtime_error(message + " (at byte " + std::to_string(off) + ")"), offset(off) {}

namespace {

void check_probability(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " out of [0,1]");
  }
}

void validate_node(const PathNodePtr& node, int depth, int* terminal_count) {
  if (!node) throw std::invalid_argument("null path node");
  switch (node->kind) {
    case PathKind::Terminal:
      ++*terminal_count;
      return;
    case PathKind::Atom:
      if (node->role_id.empty()) throw std::invalid_argument("empty role_id");
      return;
    case PathKind::Seq:
      if (node->children.empty()) throw std::invalid_argument("empty seq");
      for (const auto& c : node->children) validate_node(c, depth + 1, terminal_count);
      return;
    case PathKind::Repeat:
      if (node->min < 0 || node->min > node->max) {
        throw std::invalid_argument("repeat bounds violate 0 <= min <= max");
      }
      check_probability(node->p_continue, "p_continue");
      validate_node(node->child, depth + 1, terminal_count);
      return;
    case PathKind::ParallelFanout:
      if (node->min < 0 || node->min > node->max) {
        throw std::invalid_argument("fanout bounds violate 0 <= min <= max");
      }
      validate_node(node->child, depth + 1, terminal_count);
      return;
    case PathKind::Optional:
      check_probability(node->p, "optional p");
      validate_node(node->child, depth + 1, terminal_count);
      return;
  }
}

}  // namespace

void validate_path_expr(const PathNodePtr& root) {
  if (!root || root->kind != PathKind::Seq) {
    throw std::invalid_argument("root must be a seq");
  }
  int terminals = 0;
  validate_node(root, 0, &terminals);
  if (terminals != 1 || root->children.back()->kind != PathKind::Terminal) {
    throw std::invalid_argument(
        "terminal must appear exactly once, as the final element of the root seq");
  }
}

PathExpr::PathExpr(PathNodePtr root) : root_(std::move(root)) { validate_path_expr(root_); }

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  PathExpr parse() {
    skip_spaces();
    auto seq = parse_seq();
    skip_spaces();
    if (pos_ != text_.size()) throw ParseError("trailing input", pos_);
    if (seq->kind != PathKind::Seq) seq = PathNode::seq({seq});
    if (seq->children.empty() || seq->children.back()->kind != PathKind::Terminal) {
      throw ParseError("terminal missing at end of expression", pos_);
    }
    int terminals = 0;
    validate_terminals(seq, &terminals);
    if (terminals != 1) throw ParseError("terminal must appear exactly once", pos_);
    return PathExpr(seq);
  }

 private:
  std::string_view text_;
  size_t pos_ = 0;

  static void validate_terminals(const PathNodePtr& n, int* count) {
    if (n->kind == PathKind::Terminal) ++*count;
    if (n->child) validate_terminals(n->child, count);
    for (const auto& c : n->children) validate_terminals(c, count);
  }

  void skip_spaces() {
    while (pos_ < text_.size() && text_[pos_] == ' ') ++pos_;
  }

  bool consume(char c) {
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c, const char* what) {
    if (!consume(c)) throw ParseError(std::string("expected ") + what, pos_);
  }

  bool at_arrow() {
    skip_spaces();
    return pos_ + 1 < text_.size() && text_[pos_] == '-' && text_[pos_ + 1] == '>';
  }

  PathNodePtr parse_seq() {
    std::vector<PathNodePtr> terms;
    terms.push_back(parse_term());
    while (at_arrow()) {
      pos_ += 2;  // "->"
      skip_spaces();
      terms.push_back(parse_term());
    }
    if (terms.size() == 1) return terms[0];
    return PathNode::seq(std::move(terms));
  }

  PathNodePtr parse_term() {
    skip_spaces();
    PathNodePtr base;
    if (consume('(')) {
      base = parse_seq();
      skip_spaces();
      expect(')', "')'");
    } else {
      base = parse_atom();
    }
    return parse_quant(std::move(base));
  }

  PathNodePtr parse_atom() {
    skip_spaces();
    size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    if (pos_ == start) throw ParseError("expected role identifier", pos_);
    std::string name(text_.substr(start, pos_ - start));
    if (name == "terminal") return PathNode::terminal();
    return PathNode::atom(std::move(name));
  }

  int parse_int() {
    skip_spaces();
    size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ == start) throw ParseError("expected integer", pos_);
    return std::stoi(std::string(text_.substr(start, pos_ - start)));
  }

  PathNodePtr parse_quant(PathNodePtr base) {
    skip_spaces();
    if (consume('?')) return PathNode::optional(std::move(base));
    if (pos_ < text_.size() && text_[pos_] == '^') {
      size_t quant_start = pos_;
      ++pos_;
      expect('{', "'{' after '^'");
      bool parallel = false;
      if (pos_ + 1 < text_.size() && text_[pos_] == '|' && text_[pos_ + 1] == '|') {
        parallel = true;
        pos_ += 2;
      }
      int lo = parse_int();
      int hi = lo;
      skip_spaces();
      if (consume(',') || consume('-')) hi = parse_int();
      skip_spaces();
      expect('}', "'}' closing quantifier");
      if (lo > hi) throw ParseError("quantifier min > max", quant_start);
      if (parallel) return PathNode::fanout(std::move(base), lo, hi);
      return PathNode::repeat(std::move(base), lo, hi);
    }
    return base;
  }
};

void emit(const PathNodePtr& n, std::ostringstream& out) {
  switch (n->kind) {
    case PathKind::Terminal:
      out << "terminal";
      return;
    case PathKind::Atom:
      out << n->role_id;
      return;
    case PathKind::Seq: {
      for (size_t i = 0; i < n->children.size(); ++i) {
        if (i) out << " -> ";
        emit(n->children[i], out);
      }
      return;
    }
    case PathKind::Repeat:
      out << '(';
      emit(n->child, out);
      out << ")^{" << n->min << ',' << n->max << '}';
      return;
    case PathKind::ParallelFanout:
      out << '(';
      emit(n->child, out);
      out << ")^{||" << n->min << ',' << n->max << '}';
      return;
    case PathKind::Optional:
      if (n->child->kind == PathKind::Atom) {
        emit(n->child, out);
      } else {
        out << '(';
        emit(n->child, out);
        out << ')';
      }
      out << '?';
      return;
  }
}

}  // namespace

PathExpr parse_path_expr(std::string_view text) { return Parser(text).parse(); }

std::string path_expr_to_text(const PathExpr& expr) {
  std::ostringstream out;
  emit(expr.root(), out);
  return out.str();
}

}  // namespace pythia::workflow
