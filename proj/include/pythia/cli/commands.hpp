// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pythia/sim/config.hpp"
#include "pythia/sim/metrics.hpp"

namespace pythia::cli {

// Exit codes: 0 success, 1 configuration error, 2 runtime error.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 1;
inline constexpr int kRuntimeError = 2;

struct ProfileOptions {
  std::vector<std::string> trace_files;
  std::string out_path;
  double theta = 0.05;
  double confidence = 0.99;
};
int cmd_profile(const ProfileOptions& opts, std::ostream& out, std::ostream& err);

struct RunOptions {
  std::string workload_path;   // empty: built-in coding assistant spec
  std::string cluster_path;    // empty: built-in cluster
  std::vector<std::string> policies{"pythia"};
  std::vector<uint64_t> seeds{1};
  std::string output_dir = ".";
  int jobs = 1;
  bool write_csv = false;
  nlohmann::json policy_overrides;  // flag overrides, highest precedence
};
int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err);

struct CompareOptions {
  std::vector<std::string> report_files;
  std::string baseline = "fcfs";
  std::string csv_out;  // optional
};
int cmd_compare(const CompareOptions& opts, std::ostream& out, std::ostream& err);

// Stable output name for one simulation report.
std::string report_filename(const std::string& policy, uint64_t seed);

}  // namespace pythia::cli
