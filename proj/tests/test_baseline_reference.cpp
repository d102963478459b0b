// SPDX-License-Identifier: Apache-2.0
//
// Event-for-event equivalence of the policy-off simulator against an
// independently hand-rolled FCFS+LRU timeline on three scenarios.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "reference_scenarios.hpp"

TEST_CASE("scenario 1: identical prompts on one replica reuse the L1 cache") {
  auto r = pythia::refsim::scenario_identical_prompts();
  CHECK(r.engine == r.reference);
}

TEST_CASE("scenario 2: two-stage chain with unique prompts") {
  auto r = pythia::refsim::scenario_two_stage_chain();
  CHECK(r.engine == r.reference);
}

TEST_CASE("scenario 3: least-outstanding routing across two replicas") {
  auto r = pythia::refsim::scenario_two_replicas();
  CHECK(r.engine == r.reference);
}
