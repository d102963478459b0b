// SPDX-License-Identifier: Apache-2.0

#include "pythia/profiler/trace.hpp"

#include <fstream>

namespace pythia::profiler {

nlohmann::json trace_to_json(const TraceRecord& rec) {
  nlohmann::json doc{{"workflow_type_id", rec.workflow_type_id},
                     {"workflow_id", rec.workflow_id},
                     {"step_index", rec.step_index},
                     {"role_id", rec.role_id},
                     {"prompt_len", rec.prompt_len},
                     {"output_len", rec.output_len},
                     {"start_time", rec.start_time},
                     {"end_time", rec.end_time}};
  if (rec.parent_step) doc["parent_step"] = *rec.parent_step;
  return doc;
}

TraceRecord trace_from_json(const nlohmann::json& doc) {
  TraceRecord rec;
  rec.workflow_type_id = doc.at("workflow_type_id").get<std::string>();
  rec.workflow_id = doc.at("workflow_id").get<std::string>();
  rec.step_index = doc.at("step_index").get<int64_t>();
  if (doc.contains("parent_step") && !doc.at("parent_step").is_null()) {
    rec.parent_step = doc.at("parent_step").get<int64_t>();
  }
  rec.role_id = doc.at("role_id").get<std::string>();
  rec.prompt_len = doc.at("prompt_len").get<int64_t>();
  rec.output_len = doc.at("output_len").get<int64_t>();
  rec.start_time = doc.value("start_time", 0.0);
  rec.end_time = doc.value("end_time", 0.0);
  return rec;
}

TraceReadResult read_trace_file(const std::string& path) {
  TraceReadResult result;
  std::ifstream in(path);
  if (!in) {
    result.errors.emplace_back(0, "cannot open " + path);
    return result;
  }
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      result.records.push_back(trace_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      result.errors.emplace_back(lineno, e.what());
    }
  }
  return result;
}

void write_trace_file(const std::string& path, const std::vector<TraceRecord>& records) {
  std::ofstream out(path);
  for (const auto& rec : records) out << trace_to_json(rec).dump() << '\n';
}

}  // namespace pythia::profiler
