// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pythia/profiler/pfa.hpp"
#include "pythia/workflow/path_expr.hpp"

namespace pythia::profiler {

struct SynthesisOptions {
  // Repeat bounds default to the [p5, p95] of observed run lengths; extreme
  // bounds widen them to the observed min/max (used as a second attempt when
  // the percentile expression accepts too few training traces).
  bool extreme_bounds = false;
  // Emit only the primary chain, no optional branches.
  bool flat_chain = false;
};

struct SynthesisResult {
  workflow::PathExpr expr;
  bool degraded_structure = false;
};

// Turns a filtered, START->TERMINAL-connected automaton into a bounded path
// expression: self-loops become Repeat nodes bounded by run-length
// percentiles, concurrent sibling groups become ParallelFanout nodes bounded
// by observed group sizes, backward edges become one-level optional copies of
// the looped segment, and forward skip edges make the skipped segment
// optional. Structure the chain-with-loops shape cannot express falls back to
// the flat primary chain with degraded_structure set.
SynthesisResult synthesize_regex(const Pfa& pfa, const SynthesisOptions& opts = {});

}  // namespace pythia::profiler
