// SPDX-License-Identifier: Apache-2.0

#include "pythia/workflow/envelope.hpp"

namespace pythia::workflow {

nlohmann::json envelope_to_json(const RequestEnvelope& env) {
  nlohmann::json doc;
  doc["model"] = env.model_id;
  doc["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", ""}}});
  nlohmann::json extra;
  extra["app_metadata"] = {{"workflow_type_id", env.app_metadata.workflow_type_id},
                           {"workflow_id", env.app_metadata.workflow_id},
                           {"agent_id", env.app_metadata.agent_id}};
  if (env.sys_annotations) {
    const auto& sys = *env.sys_annotations;
    nlohmann::json ann;
    ann["predicted_output_len"] = {sys.predicted_lo, sys.predicted_hi};
    ann["alpha"] = sys.alpha;
    if (sys.path_regex) ann["predicted_path_regex"] = path_expr_to_text(*sys.path_regex);
    nlohmann::json comp = nlohmann::json::object();
    for (const auto& [role, tmpl] : sys.prompt_composition) {
      comp[role] = prompt_template_to_text(tmpl);
    }
    ann["prompt_composition"] = comp;
    extra["sys_annotations"] = ann;
  }
  doc["extra_body"] = extra;
  return doc;
}

RequestEnvelope envelope_from_json(const nlohmann::json& doc) {
  RequestEnvelope env;
  env.model_id = doc.value("model", "");
  const auto& extra = doc.at("extra_body");
  const auto& app = extra.at("app_metadata");
  env.app_metadata.workflow_type_id = app.at("workflow_type_id").get<std::string>();
  env.app_metadata.workflow_id = app.at("workflow_id").get<std::string>();
  env.app_metadata.agent_id = app.at("agent_id").get<std::string>();
  if (extra.contains("sys_annotations")) {
    const auto& ann = extra.at("sys_annotations");
    SysAnnotations sys;
    sys.predicted_lo = ann.at("predicted_output_len").at(0).get<int64_t>();
    sys.predicted_hi = ann.at("predicted_output_len").at(1).get<int64_t>();
    sys.alpha = ann.value("alpha", 1.0);
    if (ann.contains("predicted_path_regex")) {
      sys.path_regex = std::make_shared<const PathExpr>(
          parse_path_expr(ann.at("predicted_path_regex").get<std::string>()));
    }
    if (ann.contains("prompt_composition")) {
      for (const auto& [role, text] : ann.at("prompt_composition").items()) {
        sys.prompt_composition[role] = parse_prompt_template(text.get<std::string>());
      }
    }
    env.sys_annotations = std::move(sys);
  }
  return env;
}

namespace {

nlohmann::json node_to_json(const PathNodePtr& n) {
  switch (n->kind) {
    case PathKind::Terminal:
      return {{"kind", "terminal"}};
    case PathKind::Atom:
      return {{"kind", "atom"}, {"role", n->role_id}};
    case PathKind::Seq: {
      nlohmann::json children = nlohmann::json::array();
      for (const auto& c : n->children) children.push_back(node_to_json(c));
      return {{"kind", "seq"}, {"children", children}};
    }
    case PathKind::Repeat:
      return {{"kind", "repeat"},
              {"min", n->min},
              {"max", n->max},
              {"p_continue", n->p_continue},
              {"child", node_to_json(n->child)}};
    case PathKind::ParallelFanout:
      return {{"kind", "fanout"}, {"min", n->min}, {"max", n->max},
              {"child", node_to_json(n->child)}};
    case PathKind::Optional:
      return {{"kind", "optional"}, {"p", n->p}, {"child", node_to_json(n->child)}};
  }
  return {};
}

PathNodePtr node_from_json(const nlohmann::json& doc) {
  std::string kind = doc.at("kind").get<std::string>();
  if (kind == "terminal") return PathNode::terminal();
  if (kind == "atom") return PathNode::atom(doc.at("role").get<std::string>());
  if (kind == "seq") {
    std::vector<PathNodePtr> children;
    for (const auto& c : doc.at("children")) children.push_back(node_from_json(c));
    return PathNode::seq(std::move(children));
  }
  if (kind == "repeat") {
    return PathNode::repeat(node_from_json(doc.at("child")), doc.at("min").get<int>(),
                            doc.at("max").get<int>(), doc.at("p_continue").get<double>());
  }
  if (kind == "fanout") {
    return PathNode::fanout(node_from_json(doc.at("child")), doc.at("min").get<int>(),
                            doc.at("max").get<int>());
  }
  if (kind == "optional") {
    return PathNode::optional(node_from_json(doc.at("child")), doc.at("p").get<double>());
  }
  throw std::invalid_argument("unknown path node kind: " + kind);
}

}  // namespace

nlohmann::json path_expr_to_json(const PathExpr& expr) { return node_to_json(expr.root()); }

PathExpr path_expr_from_json(const nlohmann::json& doc) { return PathExpr(node_from_json(doc)); }

}  // namespace pythia::workflow
