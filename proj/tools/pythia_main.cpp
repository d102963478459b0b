// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "pythia/cli/commands.hpp"

using namespace pythia::cli;

int main(int argc, char** argv) {
  CLI::App app{"pythia: workflow-aware serving control plane simulator"};
  app.require_subcommand(1);

  ProfileOptions profile_opts;
  auto* profile = app.add_subcommand("profile", "mine traces into a profile store");
  profile->add_option("traces", profile_opts.trace_files, "trace files (JSON lines)")
      ->required();
  profile->add_option("--out", profile_opts.out_path, "store document output path");
  profile->add_option("--theta", profile_opts.theta, "transition-pruning threshold");
  profile->add_option("--confidence", profile_opts.confidence, "length-interval confidence");

  RunOptions run_opts;
  std::string experiment_path;
  std::vector<std::string> overrides;
  auto* run = app.add_subcommand("run", "run simulation experiments");
  run->add_option("--config", experiment_path, "experiment config JSON");
  run->add_option("--workload", run_opts.workload_path, "workload spec JSON");
  run->add_option("--cluster", run_opts.cluster_path, "cluster config JSON");
  run->add_option("--policy", run_opts.policies,
                  "policy presets: pythia|fcfs|lru_only|static_scale")
      ->delimiter(',');
  run->add_option("--seeds", run_opts.seeds, "seeds to run")->delimiter(',');
  run->add_option("--out", run_opts.output_dir, "output directory");
  run->add_option("--jobs", run_opts.jobs, "parallel simulation instances");
  run->add_flag("--csv", run_opts.write_csv, "also write queue/JCT CSV time series");
  run->add_option("--set", overrides, "policy key override, key=value (repeatable)");

  CompareOptions cmp_opts;
  auto* cmp = app.add_subcommand("compare", "compare metric reports");
  cmp->add_option("reports", cmp_opts.report_files, "metric report JSON files")->required();
  cmp->add_option("--baseline", cmp_opts.baseline, "baseline policy for ratio columns");
  cmp->add_option("--csv-out", cmp_opts.csv_out, "write the comparison table as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (profile->parsed()) return cmd_profile(profile_opts, std::cout, std::cerr);
    if (run->parsed()) {
      if (!experiment_path.empty()) {
        std::ifstream in(experiment_path);
        if (!in) {
          std::cerr << "config error: cannot open " << experiment_path << "\n";
          return kConfigError;
        }
        nlohmann::json doc;
        try {
          in >> doc;
        } catch (const std::exception& e) {
          std::cerr << "config error: " << e.what() << "\n";
          return kConfigError;
        }
        // Precedence: CLI flags > experiment file > defaults.
        if (run_opts.workload_path.empty()) {
          run_opts.workload_path = doc.value("workload", "");
        }
        if (run_opts.cluster_path.empty()) run_opts.cluster_path = doc.value("cluster", "");
        if (run->count("--policy") == 0 && doc.contains("policies")) {
          run_opts.policies = doc.at("policies").get<std::vector<std::string>>();
        }
        if (run->count("--seeds") == 0 && doc.contains("seeds")) {
          run_opts.seeds = doc.at("seeds").get<std::vector<uint64_t>>();
        }
        if (run->count("--out") == 0) {
          run_opts.output_dir = doc.value("output_dir", run_opts.output_dir);
        }
        if (doc.contains("policy_overrides")) {
          run_opts.policy_overrides = doc.at("policy_overrides");
        }
      }
      for (const auto& kv : overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) {
          std::cerr << "config error: --set expects key=value, got " << kv << "\n";
          return kConfigError;
        }
        std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        try {
          run_opts.policy_overrides[key] = nlohmann::json::parse(value);
        } catch (...) {
          run_opts.policy_overrides[key] = value;
        }
      }
      return cmd_run(run_opts, std::cout, std::cerr);
    }
    if (cmp->parsed()) return cmd_compare(cmp_opts, std::cout, std::cerr);
  } catch (const pythia::sim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}
