// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pythia/workflow/tokens.hpp"

namespace pythia::workflow {

// A prompt template: literal words interleaved with exact pointers into
// earlier requests' token streams. Ranges are half-open token indices and
// clamp to what actually exists (predicted lengths are intervals, not exact
// values). Textual placeholder form: "${req_12:request:[0,250]}".
struct PromptSegment {
  enum class Kind { Literal, Ref } kind = Kind::Literal;
  std::string text;  // Literal

  // Ref
  std::string request_id;
  enum class Source { Request, Response } source = Source::Request;
  int64_t start = 0;
  int64_t end = 0;  // exclusive
};

struct PromptTemplate {
  std::vector<PromptSegment> segments;

  static PromptTemplate literal(std::string text);

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

bool operator==(const PromptSegment& a, const PromptSegment& b);

// Parse/emit the placeholder string form. Throws std::invalid_argument on a
// malformed placeholder or an empty/reversed range.
PromptTemplate parse_prompt_template(const std::string& text);
std::string prompt_template_to_text(const PromptTemplate& tmpl);

// One request/response pair available to template references.
struct Exchange {
  TokenSeq request;
  TokenSeq response;
};

class PromptHistory {
 public:
  virtual ~PromptHistory() = default;
  virtual const Exchange* find(const std::string& request_id) const = 0;
};

class MapPromptHistory : public PromptHistory {
 public:
  std::unordered_map<std::string, Exchange> entries;
  const Exchange* find(const std::string& request_id) const override {
    auto it = entries.find(request_id);
    return it == entries.end() ? nullptr : &it->second;
  }
};

// Concatenates literal tokens and referenced (clamped) slices in segment
// order. Any unresolved request_id aborts assembly (std::nullopt) — the
// caller skips the prefetch rather than failing.
std::optional<TokenSeq> assemble_prompt(const PromptTemplate& tmpl, const PromptHistory& history);

// Longest assemblable prefix of the template: stops at the first unresolved
// reference instead of aborting. `complete` is true when nothing was
// unresolved. Used by forward staging, where the tail of the next prompt may
// refer to a response still being generated.
struct PrefixAssembly {
  TokenSeq tokens;
  bool complete = false;
};
PrefixAssembly assemble_resolvable_prefix(const PromptTemplate& tmpl,
                                          const PromptHistory& history);

}  // namespace pythia::workflow
