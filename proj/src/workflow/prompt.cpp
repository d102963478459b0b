// SPDX-License-Identifier: Apache-2.0

#include "pythia/workflow/prompt.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace pythia::workflow {

TokenSeq tokenize_words(std::string_view text) {
  TokenSeq out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back(fnv1a(text.substr(start, i - start)));
  }
  return out;
}

bool operator==(const PromptSegment& a, const PromptSegment& b) {
  if (a.kind != b.kind) return false;
  if (a.kind == PromptSegment::Kind::Literal) return a.text == b.text;
  return a.request_id == b.request_id && a.source == b.source && a.start == b.start &&
         a.end == b.end;
}

PromptTemplate PromptTemplate::literal(std::string text) {
  PromptTemplate t;
  PromptSegment seg;
  seg.kind = PromptSegment::Kind::Literal;
  seg.text = std::move(text);
  t.segments.push_back(std::move(seg));
  return t;
}

namespace {

PromptSegment parse_placeholder(const std::string& body) {
  // body: "id:request:[a,b]" or "id:response:[a,b]"
  PromptSegment seg;
  seg.kind = PromptSegment::Kind::Ref;
  size_t c1 = body.find(':');
  size_t c2 = body.find(':', c1 == std::string::npos ? c1 : c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos) {
    throw std::invalid_argument("malformed placeholder: " + body);
  }
  seg.request_id = body.substr(0, c1);
  std::string source = body.substr(c1 + 1, c2 - c1 - 1);
  if (source == "request") {
    seg.source = PromptSegment::Source::Request;
  } else if (source == "response") {
    seg.source = PromptSegment::Source::Response;
  } else {
    throw std::invalid_argument("placeholder source must be request|response: " + body);
  }
  std::string range = body.substr(c2 + 1);
  if (range.size() < 5 || range.front() != '[' || range.back() != ']') {
    throw std::invalid_argument("malformed placeholder range: " + body);
  }
  size_t comma = range.find(',');
  if (comma == std::string::npos) throw std::invalid_argument("malformed range: " + body);
  seg.start = std::stoll(range.substr(1, comma - 1));
  seg.end = std::stoll(range.substr(comma + 1, range.size() - comma - 2));
  if (seg.start < 0 || seg.start >= seg.end) {
    throw std::invalid_argument("range must satisfy 0 <= start < end: " + body);
  }
  return seg;
}

}  // namespace

PromptTemplate parse_prompt_template(const std::string& text) {
  PromptTemplate tmpl;
  std::string literal;
  size_t i = 0;
  auto flush_literal = [&] {
    if (literal.empty()) return;
    PromptSegment seg;
    seg.kind = PromptSegment::Kind::Literal;
    seg.text = std::move(literal);
    literal.clear();
    tmpl.segments.push_back(std::move(seg));
  };
  while (i < text.size()) {
    if (text[i] == '$' && i + 1 < text.size() && text[i + 1] == '{') {
      size_t close = text.find('}', i + 2);
      if (close == std::string::npos) throw std::invalid_argument("unterminated placeholder");
      flush_literal();
      tmpl.segments.push_back(parse_placeholder(text.substr(i + 2, close - i - 2)));
      i = close + 1;
    } else {
      literal.push_back(text[i]);
      ++i;
    }
  }
  flush_literal();
  return tmpl;
}

std::string prompt_template_to_text(const PromptTemplate& tmpl) {
  std::ostringstream out;
  for (const auto& seg : tmpl.segments) {
    if (seg.kind == PromptSegment::Kind::Literal) {
      out << seg.text;
    } else {
      out << "${" << seg.request_id << ':'
          << (seg.source == PromptSegment::Source::Request ? "request" : "response") << ":["
          << seg.start << ',' << seg.end << "]}";
    }
  }
  return out.str();
}

namespace {

void append_slice(TokenSeq& out, const TokenSeq& src, int64_t start, int64_t end) {
  int64_t n = static_cast<int64_t>(src.size());
  int64_t lo = std::min(start, n);
  int64_t hi = std::min(end, n);
  for (int64_t i = lo; i < hi; ++i) out.push_back(src[i]);
}

}  // namespace

std::optional<TokenSeq> assemble_prompt(const PromptTemplate& tmpl, const PromptHistory& history) {
  TokenSeq out;
  for (const auto& seg : tmpl.segments) {
    if (seg.kind == PromptSegment::Kind::Literal) {
      TokenSeq words = tokenize_words(seg.text);
      out.insert(out.end(), words.begin(), words.end());
      continue;
    }
    const Exchange* ex = history.find(seg.request_id);
    if (!ex) return std::nullopt;
    append_slice(out, seg.source == PromptSegment::Source::Request ? ex->request : ex->response,
                 seg.start, seg.end);
  }
  return out;
}

PrefixAssembly assemble_resolvable_prefix(const PromptTemplate& tmpl,
                                          const PromptHistory& history) {
  PrefixAssembly result;
  result.complete = true;
  for (const auto& seg : tmpl.segments) {
    if (seg.kind == PromptSegment::Kind::Literal) {
      TokenSeq words = tokenize_words(seg.text);
      result.tokens.insert(result.tokens.end(), words.begin(), words.end());
      continue;
    }
    const Exchange* ex = history.find(seg.request_id);
    if (!ex) {
      result.complete = false;
      break;
    }
    append_slice(result.tokens,
                 seg.source == PromptSegment::Source::Request ? ex->request : ex->response,
                 seg.start, seg.end);
  }
  return result;
}

}  // namespace pythia::workflow
