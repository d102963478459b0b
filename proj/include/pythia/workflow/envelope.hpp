// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "pythia/workflow/path_analysis.hpp"
#include "pythia/workflow/path_expr.hpp"
#include "pythia/workflow/prompt.hpp"

#include "json.hpp"

namespace pythia::workflow {

struct AgentRole {
  std::string role_id;
  std::string model_id;
};

// Per-role output-length statistics. `upper` is the distribution-free
// empirical quantile at confidence 1 - alpha (nearest rank), `lo` the p5
// used as the interval's lower edge.
struct AgentProfile {
  std::string role_id;
  double mean_len = 0.0;
  double cv = 0.0;
  int64_t lo = 0;
  int64_t upper = 0;
  double alpha = 1.0;
  int64_t sample_count = 0;
};

struct AppMetadata {
  std::string workflow_type_id;
  std::string workflow_id;
  std::string agent_id;
};

struct SysAnnotations {
  int64_t predicted_lo = 0;
  int64_t predicted_hi = 0;
  double alpha = 1.0;
  std::shared_ptr<const PathExpr> path_regex;
  std::map<std::string, PromptTemplate> prompt_composition;  // role -> template
};

enum class RequestState { Queued, Prefilling, Decoding, Preempted, Complete };

// One inference request as the control plane sees it. Annotated envelopes
// carry sys_annotations plus a position cursor into the shared path_regex;
// unprofiled envelopes (unknown workflow type, cold store, or a history that
// deviates from the synthesized expression) carry neither and are handled
// by the reactive fallbacks everywhere.
struct RequestEnvelope {
  std::string request_id;
  std::string model_id;
  AppMetadata app_metadata;
  std::optional<SysAnnotations> sys_annotations;
  std::optional<PathCursor> position;  // addresses a node of sys_annotations->path_regex

  int64_t prompt_len = 0;
  RequestState state = RequestState::Queued;
  int64_t tokens_generated = 0;
  double arrival_time = 0.0;
  double enqueue_time = 0.0;
  double base_priority = 0.0;

  bool unprofiled() const { return !sys_annotations.has_value(); }
};

// Serialized document form (the payload an OpenAI-compatible endpoint would
// carry in extra_body): top-level "model", "messages", "extra_body" with
// "app_metadata" and, when annotated, "sys_annotations". Path expressions
// serialize as their textual form, templates as placeholder strings.
nlohmann::json envelope_to_json(const RequestEnvelope& env);
RequestEnvelope envelope_from_json(const nlohmann::json& doc);

// Full-fidelity tree form, preserving the probability annotations the
// textual grammar cannot carry.
nlohmann::json path_expr_to_json(const PathExpr& expr);
PathExpr path_expr_from_json(const nlohmann::json& doc);

}  // namespace pythia::workflow
