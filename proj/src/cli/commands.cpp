// SPDX-License-Identifier: Apache-2.0

#include "pythia/cli/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "pythia/profiler/store.hpp"
#include "pythia/sim/engine.hpp"
#include "pythia/workflow/path_expr.hpp"

namespace pythia::cli {

namespace fs = std::filesystem;

int cmd_profile(const ProfileOptions& opts, std::ostream& out, std::ostream& err) {
  profiler::StoreConfig cfg;
  cfg.prune_theta = opts.theta;
  cfg.confidence = opts.confidence;
  profiler::ProfileStore store(cfg);

  // Group records per (type, workflow), keeping file order within a workflow.
  std::map<std::pair<std::string, std::string>, std::vector<profiler::TraceRecord>> grouped;
  int malformed = 0, read = 0;
  for (const auto& path : opts.trace_files) {
    auto result = profiler::read_trace_file(path);
    for (const auto& [line, message] : result.errors) {
      err << path << ":" << line << ": skipped: " << message << "\n";
      ++malformed;
    }
    for (auto& rec : result.records) {
      ++read;
      grouped[{rec.workflow_type_id, rec.workflow_id}].push_back(std::move(rec));
    }
  }
  int ingested = 0, rejected = 0;
  for (auto& [key, records] : grouped) {
    std::stable_sort(records.begin(), records.end(),
                     [](const profiler::TraceRecord& a, const profiler::TraceRecord& b) {
                       return a.step_index < b.step_index;
                     });
    try {
      store.ingest_trace(records);
      ++ingested;
    } catch (const std::exception& e) {
      err << "workflow " << key.second << " rejected: " << e.what() << "\n";
      ++rejected;
    }
  }

  out << "records read: " << read << ", malformed lines skipped: " << malformed
      << ", workflows ingested: " << ingested << ", rejected: " << rejected << "\n";
  for (const auto& type : store.known_types()) {
    out << "\nworkflow_type: " << type << " (" << store.ingested(type) << " workflows)\n";
    auto expr = store.synthesized(type);
    if (expr) {
      out << "  path_expr: " << workflow::path_expr_to_text(*expr) << "\n";
      out << "  training acceptance: " << std::fixed << std::setprecision(4)
          << store.acceptance(type) << (store.degraded(type) ? " (degraded structure)" : "")
          << "\n";
      out.unsetf(std::ios::fixed);
    }
    const profiler::Pfa* pfa = store.pfa(type);
    if (!pfa) continue;
    std::set<std::string> roles;
    for (const auto& [edge, count] : pfa->transition_counts) {
      (void)count;
      if (edge.first != profiler::kStart) roles.insert(edge.first);
      if (edge.second != profiler::kTerminal) roles.insert(edge.second);
    }
    out << "  role            mean      cv        p5        p" << (opts.confidence * 100)
        << "  samples\n";
    for (const auto& role : roles) {
      auto prof = store.role_profile(type, role);
      if (prof.sample_count == 0) continue;
      out << "  " << std::left << std::setw(14) << role << std::right << "  " << std::setw(8)
          << std::fixed << std::setprecision(1) << prof.mean_len << "  " << std::setw(8)
          << std::setprecision(3) << prof.cv << "  " << std::setw(8) << prof.lo << "  "
          << std::setw(8) << prof.upper << "  " << std::setw(7) << prof.sample_count << "\n";
      out.unsetf(std::ios::fixed);
    }
  }
  if (!opts.out_path.empty()) {
    store.save(opts.out_path);
    out << "\nstore written to " << opts.out_path << "\n";
  }
  return kOk;
}

std::string report_filename(const std::string& policy, uint64_t seed) {
  return policy + "_" + std::to_string(seed) + ".json";
}

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  sim::WorkloadSpec workload;
  sim::ClusterConfig cluster;
  try {
    workload = opts.workload_path.empty() ? sim::coding_assistant_workload()
                                          : sim::load_workload(opts.workload_path);
    cluster = opts.cluster_path.empty() ? sim::coding_assistant_cluster()
                                        : sim::load_cluster(opts.cluster_path);
    fs::create_directories(opts.output_dir);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  struct Job {
    std::string policy;
    uint64_t seed;
  };
  std::vector<Job> jobs;
  std::vector<sim::PolicyConfig> policies;
  try {
    for (const auto& name : opts.policies) {
      sim::PolicyConfig policy = sim::PolicyConfig::preset(name);
      if (!opts.policy_overrides.empty()) {
        nlohmann::json merged = sim::policy_to_json(policy);
        merged.update(opts.policy_overrides);
        policy = sim::policy_from_json(merged);
        policy.name = name;
      }
      policies.push_back(policy);
      for (uint64_t seed : opts.seeds) jobs.push_back({name, seed});
    }
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  auto run_one = [&](const Job& job) -> std::string {
    const sim::PolicyConfig* policy = nullptr;
    for (size_t i = 0; i < opts.policies.size(); ++i) {
      if (opts.policies[i] == job.policy) policy = &policies[i];
    }
    sim::SimOptions options;
    options.seed = job.seed;
    auto result = sim::run_simulation(workload, cluster, *policy, options);
    fs::path path = fs::path(opts.output_dir) / report_filename(job.policy, job.seed);
    std::ofstream file(path);
    file << result.metrics.to_json().dump(2) << "\n";
    if (opts.write_csv) {
      std::ofstream q(fs::path(opts.output_dir) /
                      (job.policy + "_" + std::to_string(job.seed) + "_queues.csv"));
      q << result.metrics.queue_depth_csv();
      std::ofstream j(fs::path(opts.output_dir) /
                      (job.policy + "_" + std::to_string(job.seed) + "_jct.csv"));
      j << result.metrics.jct_csv();
    }
    std::ostringstream line;
    line << job.policy << " seed=" << job.seed << ": mean_jct=" << result.metrics.mean_jct
         << "s p95=" << result.metrics.p95_jct
         << "s throughput=" << result.metrics.throughput_tokens_per_s << " tok/s -> "
         << path.string();
    return line.str();
  };

  try {
    if (opts.jobs <= 1) {
      for (const auto& job : jobs) out << run_one(job) << "\n";
    } else {
      // Isolated simulation instances; per-job output files are independent.
      size_t next = 0;
      while (next < jobs.size()) {
        size_t batch = std::min<size_t>(opts.jobs, jobs.size() - next);
        std::vector<std::future<std::string>> futures;
        for (size_t i = 0; i < batch; ++i) {
          futures.push_back(
              std::async(std::launch::async, run_one, jobs[next + i]));
        }
        for (auto& f : futures) out << f.get() << "\n";
        next += batch;
      }
    }
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

namespace {

struct Row {
  std::string name;
  std::optional<double> value;
};

std::optional<double> metric_of(const sim::MetricsReport& r, const std::string& key) {
  if (key == "mean_jct_s") return r.mean_jct;
  if (key == "p95_jct_s") return r.p95_jct;
  if (key == "throughput_tokens_per_s") return r.throughput_tokens_per_s;
  if (key == "mean_ttft_s") return r.mean_ttft;
  if (key == "mean_queue_delay_s") return r.mean_queue_delay;
  if (key == "hit_ratio_l1") return r.hit_ratio_l1;
  if (key == "hit_ratio_l2") return r.hit_ratio_l2;
  if (key == "preemptions") return static_cast<double>(r.preemptions);
  if (key == "oom_events") return static_cast<double>(r.oom_events);
  return std::nullopt;
}

}  // namespace

int cmd_compare(const CompareOptions& opts, std::ostream& out, std::ostream& err) {
  if (opts.report_files.size() < 2) {
    err << "config error: compare needs at least two reports\n";
    return kConfigError;
  }
  std::map<std::string, std::vector<sim::MetricsReport>> by_policy;
  std::string workload_id;
  try {
    for (const auto& path : opts.report_files) {
      std::ifstream in(path);
      if (!in) throw std::runtime_error("cannot open " + path);
      nlohmann::json doc;
      in >> doc;
      auto report = sim::MetricsReport::from_json(doc);
      if (workload_id.empty()) {
        workload_id = report.workload_id;
      } else if (report.workload_id != workload_id) {
        err << "config error: reports mix workloads (" << workload_id << " vs "
            << report.workload_id << ")\n";
        return kConfigError;
      }
      by_policy[report.policy].push_back(std::move(report));
    }
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kRuntimeError;
  }

  const std::vector<std::string> keys{"mean_jct_s",          "p95_jct_s",
                                      "throughput_tokens_per_s", "mean_ttft_s",
                                      "mean_queue_delay_s",  "hit_ratio_l1",
                                      "hit_ratio_l2",        "preemptions",
                                      "oom_events"};
  std::map<std::string, std::map<std::string, std::optional<double>>> table;  // policy -> key -> mean
  for (const auto& [policy, reports] : by_policy) {
    for (const auto& key : keys) {
      std::vector<double> vals;
      for (const auto& r : reports) {
        if (auto v = metric_of(r, key)) vals.push_back(*v);
      }
      table[policy][key] =
          vals.empty() ? std::nullopt : std::optional<double>(sim::mean_of(vals));
    }
  }

  bool have_baseline = by_policy.count(opts.baseline) > 0;
  if (!have_baseline) {
    err << "note: baseline policy \"" << opts.baseline << "\" absent; ratios omitted\n";
  }

  std::ostringstream csv;
  csv << "metric";
  for (const auto& [policy, cols] : table) {
    (void)cols;
    csv << ',' << policy;
    if (have_baseline && policy != opts.baseline) csv << ',' << policy << "_ratio";
  }
  csv << '\n';

  out << "workload: " << workload_id << " (ratios are " << opts.baseline << "/candidate)\n";
  out << std::left << std::setw(26) << "metric";
  for (const auto& [policy, cols] : table) {
    (void)cols;
    out << std::right << std::setw(14) << policy;
    if (have_baseline && policy != opts.baseline) out << std::setw(14) << "ratio";
  }
  out << "\n";
  for (const auto& key : keys) {
    out << std::left << std::setw(26) << key;
    csv << key;
    std::optional<double> base =
        have_baseline ? table[opts.baseline][key] : std::optional<double>();
    for (auto& [policy, cols] : table) {
      auto v = cols[key];
      if (v) {
        out << std::right << std::setw(14) << std::fixed << std::setprecision(4) << *v;
        csv << ',' << *v;
      } else {
        out << std::right << std::setw(14) << "absent";
        csv << ",absent";
      }
      out.unsetf(std::ios::fixed);
      if (have_baseline && policy != opts.baseline) {
        if (v && base && *v != 0.0) {
          double ratio = *base / *v;
          out << std::setw(14) << std::fixed << std::setprecision(4) << ratio;
          csv << ',' << ratio;
          out.unsetf(std::ios::fixed);
        } else {
          out << std::setw(14) << "absent";
          csv << ",absent";
        }
      }
    }
    out << "\n";
    csv << "\n";
  }
  if (!opts.csv_out.empty()) {
    std::ofstream f(opts.csv_out);
    f << csv.str();
  }
  return kOk;
}

}  // namespace pythia::cli
