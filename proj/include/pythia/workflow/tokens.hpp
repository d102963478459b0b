// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pythia::workflow {

// Tokens are abstract 64-bit ids; no real tokenizer exists or is needed.
// Literal text tokenizes as one token per whitespace-delimited word, each
// word hashed to a stable id, so equal text yields equal token sequences
// everywhere (the property prefix caching relies on).
using Token = uint64_t;
using TokenSeq = std::vector<Token>;

inline constexpr uint64_t kFnvOffset = 1469598103934665603ULL;
inline constexpr uint64_t kFnvPrime = 1099511628211ULL;

inline uint64_t fnv1a(std::string_view s, uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline uint64_t fnv1a(uint64_t v, uint64_t h = kFnvOffset) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (i * 8)) & 0xff;
    h *= kFnvPrime;
  }
  return h;
}

TokenSeq tokenize_words(std::string_view text);

// Synthetic response tokens: position-salted so distinct responses never
// collide on content, while the same response is reproducible.
inline Token response_token(std::string_view request_id, size_t index) {
  return fnv1a(index, fnv1a("resp", fnv1a(request_id)));
}

}  // namespace pythia::workflow
