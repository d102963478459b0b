// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace pythia::profiler {

// One completed agent invocation from the annotated request/response logs.
struct TraceRecord {
  std::string workflow_type_id;
  std::string workflow_id;
  int64_t step_index = 0;
  std::optional<int64_t> parent_step;
  std::string role_id;
  int64_t prompt_len = 0;
  int64_t output_len = 0;
  double start_time = 0.0;
  double end_time = 0.0;
};

nlohmann::json trace_to_json(const TraceRecord& rec);
TraceRecord trace_from_json(const nlohmann::json& doc);

// Newline-delimited JSON. Malformed lines are skipped and reported by
// 1-based line number; the read continues.
struct TraceReadResult {
  std::vector<TraceRecord> records;
  std::vector<std::pair<int, std::string>> errors;  // line -> message
};
TraceReadResult read_trace_file(const std::string& path);
void write_trace_file(const std::string& path, const std::vector<TraceRecord>& records);

}  // namespace pythia::profiler
