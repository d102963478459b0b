// SPDX-License-Identifier: Apache-2.0

#include "pythia/profiler/store.hpp"

#include <fstream>

#include "pythia/profiler/stats.hpp"
#include "pythia/workflow/path_analysis.hpp"

namespace pythia::profiler {

using workflow::AgentProfile;
using workflow::PathExpr;
using workflow::PromptSegment;
using workflow::PromptTemplate;
using workflow::RequestEnvelope;

AgentProfile length_interval(const std::vector<int64_t>& samples, double confidence) {
  AgentProfile p;
  p.alpha = 1.0 - confidence;
  if (samples.empty()) {
    p.alpha = 1.0;  // cold start: no guarantee to offer
    return p;
  }
  p.sample_count = static_cast<int64_t>(samples.size());
  p.mean_len = sample_mean(samples);
  p.cv = sample_cv(samples);
  p.upper = nearest_rank_quantile(samples, confidence);
  p.lo = nearest_rank_quantile(samples, 0.05);
  return p;
}

ProfileStore::ProfileStore(StoreConfig cfg) : cfg_(cfg), reservoir_rng_(cfg.seed) {}

ProfileStore::ProfileStore(ProfileStore&& other) noexcept {
  std::unique_lock lock(other.mu_);
  cfg_ = other.cfg_;
  types_ = std::move(other.types_);
  histories_ = std::move(other.histories_);
  reservoir_rng_ = other.reservoir_rng_;
}

ProfileStore& ProfileStore::operator=(ProfileStore&& other) noexcept {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  cfg_ = other.cfg_;
  types_ = std::move(other.types_);
  histories_ = std::move(other.histories_);
  reservoir_rng_ = other.reservoir_rng_;
  return *this;
}

void ProfileStore::ingest_trace(const std::vector<TraceRecord>& records) {
  if (records.empty()) throw std::invalid_argument("empty trace");
  std::unique_lock lock(mu_);
  TypeProfile& tp = types_[records[0].workflow_type_id];
  ingest_into_pfa(tp.pfa, records);  // validates ordering / single workflow

  std::vector<std::string> roles;
  roles.reserve(records.size());
  for (const auto& rec : records) {
    roles.push_back(rec.role_id);
    RoleStats& rs = tp.roles[rec.role_id];
    rs.seen += 1;
    if (static_cast<int>(rs.reservoir.size()) < cfg_.reservoir_cap) {
      rs.reservoir.push_back(rec.output_len);
    } else {
      // Reservoir sampling keeps a uniform subset of the full history.
      uint64_t slot = reservoir_rng_() % static_cast<uint64_t>(rs.seen);
      if (slot < rs.reservoir.size()) rs.reservoir[slot] = rec.output_len;
    }
    rs.profile = length_interval(rs.reservoir, cfg_.confidence);
    rs.profile.role_id = rec.role_id;
  }
  tp.validation_traces.push_back(std::move(roles));
  while (static_cast<int>(tp.validation_traces.size()) > cfg_.validation_cap) {
    tp.validation_traces.pop_front();
  }

  tp.ingested_workflows += 1;
  if (tp.last_synth_at < 0 || tp.ingested_workflows - tp.last_synth_at >= cfg_.refresh_every) {
    refresh_locked(tp);
  }
}

double ProfileStore::acceptance_of_locked(const PathExpr& expr, const TypeProfile& tp) const {
  if (tp.validation_traces.empty()) return 0.0;
  int accepted = 0;
  for (const auto& trace : tp.validation_traces) {
    if (workflow::match_trace(expr, trace)) ++accepted;
  }
  return static_cast<double>(accepted) / static_cast<double>(tp.validation_traces.size());
}

void ProfileStore::refresh_locked(TypeProfile& tp) {
  tp.filtered = filter_pfa(tp.pfa, cfg_.prune_theta);
  SynthesisResult best = synthesize_regex(tp.filtered, {});
  double best_acc = acceptance_of_locked(best.expr, tp);
  if (best_acc < cfg_.min_acceptance) {
    SynthesisResult wide = synthesize_regex(tp.filtered, {.extreme_bounds = true});
    double wide_acc = acceptance_of_locked(wide.expr, tp);
    if (wide_acc > best_acc) {
      best = std::move(wide);
      best_acc = wide_acc;
    }
  }
  if (best_acc < cfg_.min_acceptance && !best.degraded_structure) {
    SynthesisResult chain =
        synthesize_regex(tp.filtered, {.extreme_bounds = true, .flat_chain = true});
    double chain_acc = acceptance_of_locked(chain.expr, tp);
    if (chain_acc > best_acc) {
      best = std::move(chain);
      best_acc = chain_acc;
    } else {
      best.degraded_structure = true;  // keep the richer expression, flag it
    }
  }
  tp.synthesized = std::make_shared<const PathExpr>(std::move(best.expr));
  tp.degraded_structure = best.degraded_structure;
  tp.acceptance = best_acc;
  tp.last_synth_at = tp.ingested_workflows;
}

void ProfileStore::register_template_rule(const std::string& type, const std::string& role,
                                          TemplateRule rule) {
  std::unique_lock lock(mu_);
  types_[type].template_rules[role] = std::move(rule);
}

PromptTemplate instantiate_rule(const TemplateRule& rule, const std::string& successor_role,
                                const std::vector<InvocationRecord>& history,
                                const std::string& prev_request_id) {
  const InvocationRecord* same_role_prev = nullptr;
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (it->role_id == successor_role) {
      same_role_prev = &*it;
      break;
    }
  }
  const auto& segments = same_role_prev ? rule.cont : rule.fresh;
  PromptTemplate tmpl;
  for (const auto& seg : segments) {
    if (seg.kind == TemplateRuleSegment::Kind::Literal) {
      PromptSegment out;
      out.kind = PromptSegment::Kind::Literal;
      out.text = seg.text;
      tmpl.segments.push_back(std::move(out));
      continue;
    }
    std::string target;
    if (seg.binding == TemplateRuleSegment::Binding::Prev) {
      target = prev_request_id;
    } else if (same_role_prev) {
      target = same_role_prev->request_id;
    }
    if (target.empty()) continue;  // unresolvable binding: segment dropped
    PromptSegment out;
    out.kind = PromptSegment::Kind::Ref;
    out.request_id = target;
    out.source = seg.source;
    out.start = seg.start;
    out.end = seg.end;
    tmpl.segments.push_back(std::move(out));
  }
  return tmpl;
}

bool ProfileStore::annotate(RequestEnvelope& env) {
  std::unique_lock lock(mu_);
  auto it = types_.find(env.app_metadata.workflow_type_id);
  if (it == types_.end()) return false;
  TypeProfile& tp = it->second;

  // History is tracked as soon as the type is known so positions stay
  // locatable once the type is promoted mid-workflow.
  auto& history = histories_[env.app_metadata.workflow_id];
  history.push_back({env.app_metadata.agent_id, env.request_id});

  if (tp.ingested_workflows < cfg_.promote_after || !tp.synthesized) return false;

  std::vector<std::string> roles;
  roles.reserve(history.size());
  for (const auto& inv : history) roles.push_back(inv.role_id);
  auto position = workflow::locate_position(*tp.synthesized, roles);
  if (!position) return false;  // deviated from the mined structure: reactive tier

  workflow::SysAnnotations sys;
  auto role_it = tp.roles.find(env.app_metadata.agent_id);
  if (role_it != tp.roles.end() && role_it->second.profile.sample_count > 0) {
    const AgentProfile& prof = role_it->second.profile;
    sys.predicted_lo = prof.lo;
    sys.predicted_hi = prof.upper;
    sys.alpha = prof.alpha;
  } else {
    // Cold role inside a known type: reserve the generation cap. The cap is
    // enforced by the engine, so the exceedance probability is zero.
    sys.predicted_lo = 0;
    sys.predicted_hi = cfg_.global_max_output;
    sys.alpha = 0.0;
  }
  sys.path_regex = tp.synthesized;

  // Concurrent siblings must agree on the "previous request" their
  // successor's template points at: the group's first sibling. The cursor's
  // enclosing fanout frame gives the ordinal.
  std::string prev_request = env.request_id;
  const auto& frames = position->frames();
  if (frames.size() >= 2) {
    const auto& enclosing = frames[frames.size() - 2];
    if (enclosing.node->kind == workflow::PathKind::ParallelFanout) {
      size_t back = static_cast<size_t>(enclosing.progress);
      if (back < history.size()) prev_request = history[history.size() - 1 - back].request_id;
    }
  }
  for (const auto& step : workflow::cursor_successors(*position)) {
    if (step.complete || step.probability <= 0.0) continue;
    const std::string& next_role = step.to.role();
    if (sys.prompt_composition.count(next_role)) continue;
    auto rule_it = tp.template_rules.find(next_role);
    if (rule_it == tp.template_rules.end()) continue;
    sys.prompt_composition[next_role] =
        instantiate_rule(rule_it->second, next_role, history, prev_request);
  }

  env.sys_annotations = std::move(sys);
  env.position = *position;
  return true;
}

void ProfileStore::workflow_complete(const std::string& workflow_id) {
  std::unique_lock lock(mu_);
  histories_.erase(workflow_id);
}

std::shared_ptr<const PathExpr> ProfileStore::synthesized(const std::string& type) const {
  std::shared_lock lock(mu_);
  auto it = types_.find(type);
  return it == types_.end() ? nullptr : it->second.synthesized;
}

const Pfa* ProfileStore::pfa(const std::string& type) const {
  std::shared_lock lock(mu_);
  auto it = types_.find(type);
  return it == types_.end() ? nullptr : &it->second.pfa;
}

const Pfa* ProfileStore::filtered_pfa(const std::string& type) const {
  std::shared_lock lock(mu_);
  auto it = types_.find(type);
  return it == types_.end() ? nullptr : &it->second.filtered;
}

AgentProfile ProfileStore::role_profile(const std::string& type, const std::string& role) const {
  std::shared_lock lock(mu_);
  auto it = types_.find(type);
  if (it == types_.end()) return {};
  auto rit = it->second.roles.find(role);
  return rit == it->second.roles.end() ? AgentProfile{} : rit->second.profile;
}

double ProfileStore::acceptance(const std::string& type) const {
  std::shared_lock lock(mu_);
  auto it = types_.find(type);
  return it == types_.end() ? 0.0 : it->second.acceptance;
}

bool ProfileStore::degraded(const std::string& type) const {
  std::shared_lock lock(mu_);
  auto it = types_.find(type);
  return it == types_.end() ? false : it->second.degraded_structure;
}

std::vector<std::string> ProfileStore::known_types() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [type, tp] : types_) {
    (void)tp;
    out.push_back(type);
  }
  return out;
}

int64_t ProfileStore::ingested(const std::string& type) const {
  std::shared_lock lock(mu_);
  auto it = types_.find(type);
  return it == types_.end() ? 0 : it->second.ingested_workflows;
}

namespace {

nlohmann::json rule_segment_to_json(const TemplateRuleSegment& seg) {
  if (seg.kind == TemplateRuleSegment::Kind::Literal) {
    return {{"literal", seg.text}};
  }
  return {{"binding", seg.binding == TemplateRuleSegment::Binding::Prev ? "prev" : "same_role_prev"},
          {"source", seg.source == PromptSegment::Source::Request ? "request" : "response"},
          {"range", {seg.start, seg.end}}};
}

TemplateRuleSegment rule_segment_from_json(const nlohmann::json& doc) {
  TemplateRuleSegment seg;
  if (doc.contains("literal")) {
    seg.kind = TemplateRuleSegment::Kind::Literal;
    seg.text = doc.at("literal").get<std::string>();
    return seg;
  }
  seg.kind = TemplateRuleSegment::Kind::Ref;
  seg.binding = doc.at("binding").get<std::string>() == "prev"
                    ? TemplateRuleSegment::Binding::Prev
                    : TemplateRuleSegment::Binding::SameRolePrev;
  seg.source = doc.at("source").get<std::string>() == "request" ? PromptSegment::Source::Request
                                                                : PromptSegment::Source::Response;
  seg.start = doc.at("range").at(0).get<int64_t>();
  seg.end = doc.at("range").at(1).get<int64_t>();
  return seg;
}

nlohmann::json pfa_to_json(const Pfa& pfa) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [edge, count] : pfa.transition_counts) {
    edges.push_back({edge.first, edge.second, count});
  }
  return {{"transitions", edges},
          {"repetition_runs", pfa.repetition_runs},
          {"fanout_sizes", pfa.fanout_sizes},
          {"visit_counts", pfa.visit_counts},
          {"degraded_filter", pfa.degraded_filter}};
}

Pfa pfa_from_json(const nlohmann::json& doc) {
  Pfa pfa;
  for (const auto& e : doc.at("transitions")) {
    pfa.transition_counts[{e.at(0).get<std::string>(), e.at(1).get<std::string>()}] =
        e.at(2).get<int64_t>();
  }
  pfa.repetition_runs =
      doc.at("repetition_runs").get<std::map<std::string, std::vector<int>>>();
  pfa.fanout_sizes = doc.at("fanout_sizes").get<std::map<std::string, std::vector<int>>>();
  if (doc.contains("visit_counts")) {
    pfa.visit_counts = doc.at("visit_counts").get<std::map<std::string, std::vector<int>>>();
  }
  pfa.degraded_filter = doc.value("degraded_filter", false);
  return pfa;
}

}  // namespace

nlohmann::json ProfileStore::to_json() const {
  std::shared_lock lock(mu_);
  nlohmann::json types = nlohmann::json::object();
  for (const auto& [type, tp] : types_) {
    nlohmann::json roles = nlohmann::json::object();
    for (const auto& [role, rs] : tp.roles) {
      roles[role] = {{"reservoir", rs.reservoir},
                     {"seen", rs.seen},
                     {"mean", rs.profile.mean_len},
                     {"cv", rs.profile.cv},
                     {"lo", rs.profile.lo},
                     {"upper", rs.profile.upper},
                     {"alpha", rs.profile.alpha},
                     {"sample_count", rs.profile.sample_count}};
    }
    nlohmann::json rules = nlohmann::json::object();
    for (const auto& [role, rule] : tp.template_rules) {
      nlohmann::json fresh = nlohmann::json::array(), cont = nlohmann::json::array();
      for (const auto& seg : rule.fresh) fresh.push_back(rule_segment_to_json(seg));
      for (const auto& seg : rule.cont) cont.push_back(rule_segment_to_json(seg));
      rules[role] = {{"fresh", fresh}, {"cont", cont}};
    }
    nlohmann::json validation = nlohmann::json::array();
    for (const auto& trace : tp.validation_traces) validation.push_back(trace);
    types[type] = {
        {"pfa", pfa_to_json(tp.pfa)},
        {"synthesized",
         tp.synthesized ? workflow::path_expr_to_json(*tp.synthesized) : nlohmann::json()},
        {"synthesized_text",
         tp.synthesized ? workflow::path_expr_to_text(*tp.synthesized) : ""},
        {"degraded_structure", tp.degraded_structure},
        {"acceptance", tp.acceptance},
        {"roles", roles},
        {"template_rules", rules},
        {"validation_traces", validation},
        {"ingested_workflows", tp.ingested_workflows},
        {"last_synth_at", tp.last_synth_at}};
  }
  return {{"types", types}};
}

ProfileStore ProfileStore::from_json(const nlohmann::json& doc, StoreConfig cfg) {
  ProfileStore store(cfg);
  for (const auto& [type, tj] : doc.at("types").items()) {
    TypeProfile tp;
    tp.pfa = pfa_from_json(tj.at("pfa"));
    tp.degraded_structure = tj.value("degraded_structure", false);
    tp.acceptance = tj.value("acceptance", 0.0);
    tp.ingested_workflows = tj.value("ingested_workflows", int64_t{0});
    tp.last_synth_at = tj.value("last_synth_at", int64_t{-1});
    for (const auto& [role, rj] : tj.at("roles").items()) {
      RoleStats rs;
      rs.reservoir = rj.at("reservoir").get<std::vector<int64_t>>();
      rs.seen = rj.at("seen").get<int64_t>();
      rs.profile = length_interval(rs.reservoir, cfg.confidence);
      rs.profile.role_id = role;
      tp.roles[role] = std::move(rs);
    }
    for (const auto& [role, rulej] : tj.at("template_rules").items()) {
      TemplateRule rule;
      for (const auto& seg : rulej.at("fresh")) rule.fresh.push_back(rule_segment_from_json(seg));
      for (const auto& seg : rulej.at("cont")) rule.cont.push_back(rule_segment_from_json(seg));
      tp.template_rules[role] = std::move(rule);
    }
    for (const auto& trace : tj.at("validation_traces")) {
      tp.validation_traces.push_back(trace.get<std::vector<std::string>>());
    }
    if (tj.contains("synthesized") && !tj.at("synthesized").is_null()) {
      tp.filtered = filter_pfa(tp.pfa, cfg.prune_theta);
      tp.synthesized = std::make_shared<const PathExpr>(
          workflow::path_expr_from_json(tj.at("synthesized")));
    }
    store.types_[type] = std::move(tp);
  }
  return store;
}

void ProfileStore::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump(2) << '\n';
}

ProfileStore ProfileStore::load(const std::string& path, StoreConfig cfg) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json doc;
  in >> doc;
  return from_json(doc, cfg);
}

}  // namespace pythia::profiler
