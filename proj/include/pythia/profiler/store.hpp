// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include "pythia/profiler/pfa.hpp"
#include "pythia/profiler/synthesis.hpp"
#include "pythia/workflow/envelope.hpp"

namespace pythia::profiler {

struct StoreConfig {
  double prune_theta = 0.05;     // transition-pruning threshold
  double confidence = 0.99;      // output-length interval confidence
  int refresh_every = 50;        // workflows between expression refreshes
  int reservoir_cap = 10000;     // output-length samples kept per role
  int promote_after = 20;        // workflows before leaving the reactive tier
  int64_t global_max_output = 16384;  // generation cap; the fallback bound
  int validation_cap = 1000;     // recent traces kept for acceptance checks
  double min_acceptance = 0.90;  // training-trace acceptance the expression must reach
  uint64_t seed = 0x5DEECE66DULL;
};

// Distribution-free output-length interval from raw samples: upper bound at
// the nearest-rank `confidence` quantile, lower edge at p5. Empty samples
// yield a cold profile (sample_count == 0) that annotation replaces with the
// global cap.
workflow::AgentProfile length_interval(const std::vector<int64_t>& samples, double confidence);

// How a role's prompt is composed from workflow history. Bindings resolve to
// concrete request ids at annotation time: Prev is the request being
// annotated (the successor's predecessor), SameRolePrev the target role's own
// most recent request. A rule carries two segment lists: `cont` applies when
// the role has run before in this workflow, `fresh` otherwise.
struct TemplateRuleSegment {
  enum class Kind { Literal, Ref } kind = Kind::Literal;
  std::string text;
  enum class Binding { Prev, SameRolePrev } binding = Binding::Prev;
  workflow::PromptSegment::Source source = workflow::PromptSegment::Source::Response;
  int64_t start = 0;
  int64_t end = 0;
};
struct TemplateRule {
  std::vector<TemplateRuleSegment> fresh;
  std::vector<TemplateRuleSegment> cont;
};

// One invocation already seen for a workflow: enough to locate positions and
// bind template references.
struct InvocationRecord {
  std::string role_id;
  std::string request_id;
};

struct RoleStats {
  std::vector<int64_t> reservoir;
  int64_t seen = 0;
  workflow::AgentProfile profile;
};

struct TypeProfile {
  Pfa pfa;
  Pfa filtered;
  std::shared_ptr<const workflow::PathExpr> synthesized;
  bool degraded_structure = false;
  double acceptance = 0.0;  // training-trace acceptance of `synthesized`
  std::map<std::string, RoleStats> roles;
  std::map<std::string, TemplateRule> template_rules;
  std::deque<std::vector<std::string>> validation_traces;
  int64_t ingested_workflows = 0;
  int64_t last_synth_at = -1;
};

// The profiler's memory: automata, synthesized expressions, per-role length
// profiles and per-workflow invocation history. Reads share a lock; writes
// serialize. Annotation reads one consistent snapshot of the type profile.
class ProfileStore {
 public:
  explicit ProfileStore(StoreConfig cfg = {});
  ProfileStore(ProfileStore&& other) noexcept;
  ProfileStore& operator=(ProfileStore&& other) noexcept;

  const StoreConfig& config() const { return cfg_; }

  // Folds one completed workflow into its type profile. Records must be
  // sorted by step_index and share one workflow_id.
  void ingest_trace(const std::vector<TraceRecord>& records);

  void register_template_rule(const std::string& type, const std::string& role,
                              TemplateRule rule);

  // Injects sys_annotations and the position cursor. Returns false (leaving
  // the envelope unprofiled) for unknown or not-yet-promoted types and for
  // histories that deviate from the synthesized expression. Records the
  // invocation in the workflow's history either way once the type is known.
  bool annotate(workflow::RequestEnvelope& env);

  void workflow_complete(const std::string& workflow_id);

  std::shared_ptr<const workflow::PathExpr> synthesized(const std::string& type) const;
  const Pfa* pfa(const std::string& type) const;
  const Pfa* filtered_pfa(const std::string& type) const;
  workflow::AgentProfile role_profile(const std::string& type, const std::string& role) const;
  double acceptance(const std::string& type) const;
  bool degraded(const std::string& type) const;
  std::vector<std::string> known_types() const;
  int64_t ingested(const std::string& type) const;

  nlohmann::json to_json() const;
  static ProfileStore from_json(const nlohmann::json& doc, StoreConfig cfg = {});
  void save(const std::string& path) const;
  static ProfileStore load(const std::string& path, StoreConfig cfg = {});

 private:
  void refresh_locked(TypeProfile& tp);
  double acceptance_of_locked(const workflow::PathExpr& expr, const TypeProfile& tp) const;

  StoreConfig cfg_;
  std::map<std::string, TypeProfile> types_;
  std::map<std::string, std::vector<InvocationRecord>> histories_;
  std::mt19937_64 reservoir_rng_;
  mutable std::shared_mutex mu_;
};

// Builds the concrete PromptTemplate for `successor_role` out of its rule and
// the workflow history; the same instantiation drives both annotation and the
// synthetic workload's actual prompt construction, so staged prefixes match
// the prompts that eventually arrive.
workflow::PromptTemplate instantiate_rule(const TemplateRule& rule,
                                          const std::string& successor_role,
                                          const std::vector<InvocationRecord>& history,
                                          const std::string& prev_request_id);

}  // namespace pythia::profiler
