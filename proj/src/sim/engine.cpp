// SPDX-License-Identifier: Apache-2.0

#include "pythia/sim/engine.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <optional>
#include <queue>
#include <sstream>

#include "pythia/cache/manager.hpp"
#include "pythia/profiler/store.hpp"
#include "pythia/scale/autoscaler.hpp"
#include "pythia/sched/priority.hpp"
#include "pythia/sched/router.hpp"
#include "pythia/sched/worker.hpp"
#include "pythia/sim/rng.hpp"
#include "pythia/workflow/path_analysis.hpp"

namespace pythia::sim {

using cache::CacheHierarchy;
using cache::Lineage;
using cache::SharedL3;
using cache::Tier;
using workflow::RequestState;
using workflow::TokenSeq;

double prefill_time(int64_t prompt_len, const CacheHierarchy::Match& match,
                    const ModelSpec& model) {
  int64_t reusable = std::max({match.l1, match.l2, match.l3});
  int64_t l2_part = std::max<int64_t>(std::min(reusable, match.l2) - match.l1, 0);
  int64_t l3_part = std::max<int64_t>(reusable - std::max(match.l1, match.l2), 0);
  double t = static_cast<double>(prompt_len - reusable) / model.prefill_rate;
  t += static_cast<double>(l2_part) / model.pcie_rate;
  t += static_cast<double>(l3_part) / model.l3_fetch_rate;
  return t;
}

double decode_interval(const ModelSpec& model, int n) {
  double per_request_rate = model.decode_rate_base / (1.0 + model.batch_penalty * (n - 1));
  return 1.0 / per_request_rate;
}

namespace {

uint64_t mix_seed(uint64_t seed, const std::string& tag, uint64_t salt = 0) {
  return workflow::fnv1a(salt, workflow::fnv1a(tag, workflow::fnv1a(seed)));
}

// Event kinds in tie-break rank order.
enum Kind : int {
  kArrival = 0,
  kPrefillDone = 1,
  kDecodeTick = 2,
  kRequestComplete = 3,
  kToolCallDone = 4,
  kTransferDone = 5,
  kLoadDone = 6,
  kScaleEval = 7,
  kWindowTick = 8,
};

struct Event {
  double time;
  int kind;
  uint64_t seq;
  int a = -1;  // workflow / request / replica / transfer index, by kind
  uint64_t epoch = 0;

  bool operator>(const Event& other) const {
    if (time != other.time) return time > other.time;
    if (kind != other.kind) return kind > other.kind;
    return seq > other.seq;
  }
};

struct StagePlan {
  std::string role;
  int count = 1;
  std::vector<int64_t> lens;
  double tool_delay = 0.0;
};

struct SimWorkflow {
  int index = 0;
  std::string id;
  const WorkflowTypeSpec* type = nullptr;
  std::vector<StagePlan> stages;
  int next_stage = 0;
  int outstanding = 0;
  double arrival = -1.0;
  double done = -1.0;
  std::map<std::string, workflow::Exchange> exchanges;
  std::vector<profiler::InvocationRecord> history;
  std::vector<profiler::TraceRecord> trace;
  int64_t steps_issued = 0;
  std::vector<int64_t> stage_first_step;       // per issued stage
  std::vector<std::string> stage_first_request;
};

struct SimRequest {
  int index = 0;
  std::string id;
  int workflow = 0;
  int stage = 0;
  int sibling = 0;
  std::string role;
  std::string model_id;
  int model_idx = 0;
  workflow::RequestEnvelope env;
  TokenSeq prompt;
  int64_t prompt_len = 0;
  int64_t true_len = 0;
  int64_t step_index = 0;
  std::optional<int64_t> parent_step;
  int replica = -1;
  double create_time = 0.0;
  double first_prefill_start = -1.0;
  double ttft = -1.0;
  double complete_time = -1.0;
  uint64_t epoch = 0;
  bool prefetch_fired = false;
  TokenSeq pinned_seq;
  int64_t pinned_upto = 0;
  bool pinned = false;
  int64_t decode_overhead = 0;  // generated tokens since the last admission
};

struct BgJob {
  TokenSeq tokens;
  int64_t from = 0, to = 0;
  Lineage lineage;
  double started = 0.0;
  uint64_t epoch = 0;
  bool active = false;
};

struct Replica {
  int id = 0;
  int model_idx = 0;
  enum class Status { Loading, Ready, Draining, Off } status = Replica::Status::Ready;
  CacheHierarchy cache;
  std::vector<int> pool;
  std::vector<int> active;
  uint64_t tick_epoch = 0;
  bool tick_scheduled = false;
  double prefill_busy_until = 0.0;  // the prefill unit is serialized
  BgJob bg;

  Replica(int id_, int model_idx_, int64_t l1, int64_t l2)
      : id(id_), model_idx(model_idx_), cache(l1, l2) {}
};

struct Transfer {
  int replica = -1;
  TokenSeq tokens;
  int64_t from = 0, to = 0;
  Lineage lineage;
  bool background = false;
  uint64_t epoch = 0;
};

struct WfHistoryView : workflow::PromptHistory {
  const std::map<std::string, workflow::Exchange>* exchanges;
  explicit WfHistoryView(const std::map<std::string, workflow::Exchange>& ex) : exchanges(&ex) {}
  const workflow::Exchange* find(const std::string& request_id) const override {
    auto it = exchanges->find(request_id);
    return it == exchanges->end() ? nullptr : &it->second;
  }
};

class Engine {
 public:
  Engine(const WorkloadSpec& workload, const ClusterConfig& cluster, const PolicyConfig& policy,
         const SimOptions& options)
      : workload_(workload),
        cluster_(cluster),
        policy_(policy),
        options_(options),
        arrival_rng_(mix_seed(options.seed, "arrivals")),
        store_(make_store_config()) {
    validate();
    for (size_t mi = 0; mi < cluster_.models.size(); ++mi) {
      model_index_[cluster_.models[mi].model_id] = static_cast<int>(mi);
    }
    for (const auto& type : workload_.types) {
      for (const auto& [rid, role] : type.roles) {
        role_to_model_[rid] = role.model_id;
      }
    }
    for (size_t mi = 0; mi < cluster_.models.size(); ++mi) {
      const auto& m = cluster_.models[mi];
      for (int i = 0; i < m.initial_replicas; ++i) {
        replicas_.emplace_back(next_replica_id_++, static_cast<int>(mi), m.kv_capacity,
                               m.l2_capacity);
      }
    }
    if (policy_.annotate) {
      register_rules();
      run_warmup();
    }
  }

  SimResult run() {
    schedule_arrivals();
    push(0.0, kScaleEval, -1);
    push(0.0, kWindowTick, -1);
    while (!events_.empty()) {
      Event ev = events_.top();
      events_.pop();
      now_ = ev.time;
      if (now_ > options_.max_sim_time) {
        throw std::runtime_error("simulation exceeded max_sim_time; " + stall_diagnostic());
      }
      dispatch(ev);
    }
    if (completed_ < total_workflows()) {
      throw std::runtime_error("event queue drained with workflows incomplete; " +
                               stall_diagnostic());
    }
    finalize_metrics();
    return std::move(result_);
  }

 private:
  profiler::StoreConfig make_store_config() {
    profiler::StoreConfig cfg;
    cfg.prune_theta = policy_.prune_theta;
    cfg.confidence = policy_.confidence;
    cfg.global_max_output = policy_.global_max_output;
    cfg.seed = mix_seed(options_.seed, "reservoir");
    return cfg;
  }

  void validate() {
    if (workload_.types.empty()) throw ConfigError("workload: no workflow types");
    if (cluster_.models.empty()) throw ConfigError("cluster: no models");
    std::set<std::string> model_ids;
    for (const auto& m : cluster_.models) model_ids.insert(m.model_id);
    for (const auto& type : workload_.types) {
      workflow::PathExpr expr = workflow::parse_path_expr(type.path_expr);
      for (const auto& role : workflow::all_roles(expr)) {
        if (!type.roles.count(role)) {
          throw ConfigError("workload: role \"" + role + "\" missing from type " +
                            type.workflow_type_id);
        }
      }
      validate_fanout_atoms(expr.root());
      for (const auto& [rid, role] : type.roles) {
        if (!model_ids.count(role.model_id)) {
          throw ConfigError("workload: role \"" + rid + "\" references unknown model \"" +
                            role.model_id + "\"");
        }
      }
      ground_truth_[type.workflow_type_id] =
          std::make_shared<const workflow::PathExpr>(std::move(expr));
    }
  }

  static void validate_fanout_atoms(const workflow::PathNodePtr& node) {
    if (node->kind == workflow::PathKind::ParallelFanout &&
        node->child->kind != workflow::PathKind::Atom) {
      throw ConfigError("workload: fan-out groups must wrap a single role");
    }
    if (node->child) validate_fanout_atoms(node->child);
    for (const auto& c : node->children) validate_fanout_atoms(c);
  }

  // ---- workload realization -------------------------------------------

  const WorkflowTypeSpec& pick_type(Rng& rng) {
    if (workload_.types.size() == 1) return workload_.types[0];
    double total = 0.0;
    for (const auto& t : workload_.types) total += t.weight;
    double x = rng.uniform01() * total;
    for (const auto& t : workload_.types) {
      x -= t.weight;
      if (x <= 0.0) return t;
    }
    return workload_.types.back();
  }

  std::vector<StagePlan> realize_plan(const WorkflowTypeSpec& type, Rng& rng) {
    std::vector<StagePlan> stages;
    std::function<void(const workflow::PathNodePtr&)> walk =
        [&](const workflow::PathNodePtr& n) {
          using workflow::PathKind;
          switch (n->kind) {
            case PathKind::Terminal:
              return;
            case PathKind::Atom: {
              StagePlan s;
              s.role = n->role_id;
              s.count = 1;
              stages.push_back(std::move(s));
              return;
            }
            case PathKind::Seq:
              for (const auto& c : n->children) walk(c);
              return;
            case PathKind::Optional:
              if (rng.uniform01() < n->p) walk(n->child);
              return;
            case PathKind::Repeat: {
              int iters = n->min;
              while (iters < n->max && rng.uniform01() < n->p_continue) ++iters;
              for (int i = 0; i < iters; ++i) walk(n->child);
              return;
            }
            case PathKind::ParallelFanout: {
              StagePlan s;
              s.role = n->child->role_id;
              s.count = static_cast<int>(rng.uniform_int(n->min, n->max));
              if (s.count > 0) stages.push_back(std::move(s));
              return;
            }
          }
        };
    walk(ground_truth_.at(type.workflow_type_id)->root());
    for (auto& s : stages) {
      const RoleSpec& role = type.roles.at(s.role);
      for (int i = 0; i < s.count; ++i) {
        int64_t len = std::llround(rng.lognormal(role.mean_len, role.cv));
        len = std::clamp<int64_t>(len, 1, policy_.global_max_output);
        s.lens.push_back(len);
      }
      s.tool_delay =
          role.tool_delay_mean > 0.0 ? rng.lognormal(role.tool_delay_mean, role.tool_delay_cv)
                                     : 0.0;
    }
    return stages;
  }

  // ---- template rules shared by profiler annotation and the driver ----

  static std::string words(const std::string& prefix, int64_t n) {
    std::ostringstream out;
    for (int64_t i = 0; i < n; ++i) {
      if (i) out << ' ';
      out << prefix << '_' << i;
    }
    return out.str();
  }

  static profiler::TemplateRule rule_for(const RoleSpec& role) {
    using Seg = profiler::TemplateRuleSegment;
    constexpr int64_t kAll = int64_t{1} << 40;
    profiler::TemplateRule rule;
    Seg sys;
    sys.kind = Seg::Kind::Literal;
    sys.text = words("sys_" + role.role_id, role.sys_prompt_tokens);
    Seg carry;
    carry.kind = Seg::Kind::Ref;
    carry.binding = Seg::Binding::Prev;
    carry.source = workflow::PromptSegment::Source::Response;
    carry.start = 0;
    carry.end = role.carry_tokens;
    rule.fresh = {sys, carry};
    if (role.chat_accumulate) {
      Seg req;
      req.kind = Seg::Kind::Ref;
      req.binding = Seg::Binding::SameRolePrev;
      req.source = workflow::PromptSegment::Source::Request;
      req.start = 0;
      req.end = kAll;
      Seg resp = req;
      resp.source = workflow::PromptSegment::Source::Response;
      Seg turn;
      turn.kind = Seg::Kind::Literal;
      turn.text = words("turn_" + role.role_id, 8);
      rule.cont = {req, resp, turn};
    } else {
      rule.cont = rule.fresh;
    }
    return rule;
  }

  void register_rules() {
    for (const auto& type : workload_.types) {
      for (const auto& [rid, role] : type.roles) {
        store_.register_template_rule(type.workflow_type_id, rid, rule_for(role));
      }
    }
  }

  // Length arithmetic mirror of prompt assembly, for synthetic warmup traces.
  int64_t rule_prompt_len(const WorkflowTypeSpec& type, const RoleSpec& role, bool first_stage,
                          bool has_same_role_prev, int64_t prev_prompt_len, int64_t prev_out_len,
                          bool has_prev) const {
    int64_t len;
    if (role.chat_accumulate && has_same_role_prev) {
      len = prev_prompt_len + prev_out_len + 8;
    } else {
      len = role.sys_prompt_tokens + (has_prev ? std::min(role.carry_tokens, prev_out_len) : 0);
    }
    if (first_stage) len += type.task_prompt_tokens;
    return len + type.sibling_salt_tokens;
  }

  void run_warmup() {
    for (const auto& type : workload_.types) {
      for (int i = 0; i < workload_.warmup_workflows; ++i) {
        Rng rng(mix_seed(options_.seed, "warmup:" + type.workflow_type_id, i));
        auto stages = realize_plan(type, rng);
        if (stages.empty()) continue;
        std::vector<profiler::TraceRecord> records;
        int64_t step = 0;
        double t = 0.0;
        int64_t prev_out = 0, prev_prompt = 0;
        std::map<std::string, std::pair<int64_t, int64_t>> last_same_role;  // prompt, out
        std::optional<int64_t> prev_first_step;
        for (size_t si = 0; si < stages.size(); ++si) {
          const auto& stage = stages[si];
          const RoleSpec& role = type.roles.at(stage.role);
          bool has_same = last_same_role.count(stage.role) > 0;
          int64_t prompt_len =
              rule_prompt_len(type, role, si == 0, has_same,
                              has_same ? last_same_role[stage.role].first : 0,
                              has_same ? last_same_role[stage.role].second : 0, si > 0);
          (void)prev_prompt;
          int64_t first_step_of_stage = step;
          for (int sib = 0; sib < stage.count; ++sib) {
            profiler::TraceRecord rec;
            rec.workflow_type_id = type.workflow_type_id;
            rec.workflow_id = "warm_" + type.workflow_type_id + "_" + std::to_string(i);
            rec.step_index = step++;
            rec.parent_step = prev_first_step;
            rec.role_id = stage.role;
            rec.prompt_len = prompt_len;
            rec.output_len = stage.lens[sib];
            rec.start_time = t;
            rec.end_time = t + 20.0;
            records.push_back(std::move(rec));
          }
          last_same_role[stage.role] = {prompt_len, stage.lens.back()};
          prev_out = stage.lens.back();
          prev_prompt = prompt_len;
          (void)prev_out;
          prev_first_step = first_step_of_stage;
          t += 30.0;
        }
        store_.ingest_trace(records);
      }
    }
  }

  // ---- event plumbing ---------------------------------------------------

  void push(double time, int kind, int a, uint64_t epoch = 0) {
    events_.push(Event{time, kind, seq_++, a, epoch});
  }

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case kArrival:
        on_arrival(ev.a);
        break;
      case kPrefillDone:
        on_prefill_done(ev.a, ev.epoch);
        break;
      case kDecodeTick:
        on_decode_tick(ev.a, ev.epoch);
        break;
      case kRequestComplete:
        on_request_complete_event(ev.a);
        break;
      case kToolCallDone:
        on_tool_call_done(ev.a, static_cast<int>(ev.epoch));
        break;
      case kTransferDone:
        on_transfer_done(ev.a);
        break;
      case kLoadDone:
        on_load_done(ev.a);
        break;
      case kScaleEval:
        on_scale_eval();
        break;
      case kWindowTick:
        on_window_tick();
        break;
    }
  }

  int total_workflows() const { return workload_.arrivals.total_workflows; }

  void schedule_arrivals() {
    const auto& arr = workload_.arrivals;
    if (arr.mode == "closed") {
      int first = std::min(arr.concurrency_cap, arr.total_workflows);
      for (int i = 0; i < first; ++i) push(0.0, kArrival, i);
      next_arrival_index_ = first;
      return;
    }
    double t = 0.0;
    double mean_gap = static_cast<double>(arr.batch_size) / arr.rate;
    for (int i = 0; i < arr.total_workflows; ++i) {
      if (i > 0 && i % arr.batch_size == 0) t += arrival_rng_.interarrival(mean_gap, arr.cv);
      push(t, kArrival, i);
    }
    next_arrival_index_ = arr.total_workflows;
  }

  void on_arrival(int index) {
    if (options_.record_event_log) log_event("arrival", "w" + std::to_string(index));
    if (in_flight_ >= workload_.arrivals.concurrency_cap) {
      pending_arrivals_.push_back(index);
      return;
    }
    start_workflow(index);
  }

  void start_workflow(int index) {
    ++in_flight_;
    workflows_.resize(std::max(workflows_.size(), static_cast<size_t>(index) + 1));
    SimWorkflow& w = workflows_[index];
    w.index = index;
    w.id = "w" + std::to_string(index);
    Rng rng(mix_seed(options_.seed, "wf", static_cast<uint64_t>(index)));
    const WorkflowTypeSpec& type = pick_type(rng);
    w.type = &type;
    w.stages = realize_plan(type, rng);
    w.arrival = now_;
    if (first_arrival_ < 0) first_arrival_ = now_;
    if (w.stages.empty()) {
      finish_workflow(w);
      return;
    }
    issue_stage(w, 0);
  }

  void issue_stage(SimWorkflow& w, int stage_idx) {
    const StagePlan& stage = w.stages[stage_idx];
    const RoleSpec& role = w.type->roles.at(stage.role);
    w.next_stage = stage_idx + 1;
    w.outstanding = stage.count;
    int64_t first_step = w.steps_issued;
    w.stage_first_step.push_back(first_step);
    std::string prev_request =
        stage_idx > 0 ? w.stage_first_request[stage_idx - 1] : std::string();

    profiler::TemplateRule rule = rule_for(role);
    for (int sib = 0; sib < stage.count; ++sib) {
      int ridx = static_cast<int>(requests_.size());
      requests_.emplace_back();
      SimRequest& r = requests_.back();
      r.index = ridx;
      r.id = w.id + "_s" + std::to_string(stage_idx) + "_" + std::to_string(sib);
      r.workflow = w.index;
      r.stage = stage_idx;
      r.sibling = sib;
      r.role = stage.role;
      r.model_id = role.model_id;
      r.model_idx = model_index_.at(role.model_id);
      r.true_len = stage.lens[sib];
      r.step_index = w.steps_issued++;
      if (stage_idx > 0) r.parent_step = w.stage_first_step[stage_idx - 1];
      r.create_time = now_;

      workflow::PromptTemplate tmpl =
          profiler::instantiate_rule(rule, stage.role, w.history, prev_request);
      WfHistoryView view(w.exchanges);
      auto assembled = workflow::assemble_prompt(tmpl, view);
      assert(assembled.has_value());
      r.prompt = std::move(*assembled);
      if (stage_idx == 0) {
        for (int64_t k = 0; k < w.type->task_prompt_tokens; ++k) {
          r.prompt.push_back(workflow::fnv1a(static_cast<uint64_t>(k),
                                             workflow::fnv1a("task", workflow::fnv1a(w.id))));
        }
      }
      for (int64_t k = 0; k < w.type->sibling_salt_tokens; ++k) {
        r.prompt.push_back(workflow::fnv1a(
            static_cast<uint64_t>(k),
            workflow::fnv1a(r.id, workflow::fnv1a("salt"))));
      }
      r.prompt_len = static_cast<int64_t>(r.prompt.size());

      r.env.request_id = r.id;
      r.env.model_id = role.model_id;
      r.env.app_metadata = {w.type->workflow_type_id, w.id, stage.role};
      r.env.state = RequestState::Queued;
      r.env.prompt_len = r.prompt_len;
      r.env.arrival_time = r.env.enqueue_time = now_;

      w.exchanges[r.id].request = r.prompt;
      w.history.push_back({stage.role, r.id});
      if (sib == 0) {
        if (static_cast<int>(w.stage_first_request.size()) <= stage_idx) {
          w.stage_first_request.resize(stage_idx + 1);
        }
        w.stage_first_request[stage_idx] = r.id;
      }

      if (policy_.annotate) store_.annotate(r.env);
      if (policy_.priority_graph) {
        sched::set_priority(r.env, model_queue_depths(), role_to_model_,
                            {policy_.omega1, policy_.omega2, policy_.idle_threshold});
      } else {
        r.env.base_priority = 0.0;
      }
      if (policy_.cache_speculative && r.env.position) {
        auto future = workflow::future_roles(*r.env.position);
        future.insert(r.role);
        registry_.update(w.id, std::move(future));
      }
      route_request(r);
    }
  }

  // ---- routing ----------------------------------------------------------

  sched::Reservation reservation_of(const SimRequest& r) const {
    sched::Reservation res;
    res.prompt_len = r.prompt_len;
    if (r.env.sys_annotations) {
      res.upper = r.env.sys_annotations->predicted_hi;
      res.alpha = r.env.sys_annotations->alpha;
    } else {
      res.upper = policy_.global_max_output;
      res.alpha = 0.0;  // the generation cap cannot be exceeded
    }
    res.tokens_generated = r.env.tokens_generated;
    return res;
  }

  std::vector<int> ready_replicas(int model_idx) const {
    std::vector<int> out;
    for (size_t i = 0; i < replicas_.size(); ++i) {
      if (replicas_[i].model_idx == model_idx && replicas_[i].status == Replica::Status::Ready) {
        out.push_back(static_cast<int>(i));
      }
    }
    return out;
  }

  sched::NodeView node_view(const Replica& rep, const SimRequest& r) const {
    sched::NodeView view;
    view.replica_id = rep.id;
    view.kv_capacity = cluster_.models[rep.model_idx].kv_capacity;
    for (int idx : rep.pool) view.assigned.push_back(reservation_of(requests_[idx]));
    for (int idx : rep.active) view.assigned.push_back(reservation_of(requests_[idx]));
    view.staged_l2_prefix = rep.cache.lookup(r.prompt, nullptr).l2;
    return view;
  }

  bool route_request(SimRequest& r) {
    auto ready = ready_replicas(r.model_idx);
    if (ready.empty()) {
      ingress_[r.model_idx].push_back(r.index);
      return false;
    }
    std::optional<int> target_id;
    if (policy_.routing_statistical) {
      std::vector<sched::NodeView> views;
      views.reserve(ready.size());
      for (int ri : ready) views.push_back(node_view(replicas_[ri], r));
      auto decision = sched::route(views, reservation_of(r), policy_.epsilon);
      if (decision.target) {
        target_id = *decision.target;
        ++result_.metrics.routing_decisions;
        if (decision.cache_tiebreak_used) ++result_.metrics.cache_tiebreaks;
        log_routing(r, decision);
      }
    } else {
      std::vector<sched::NodeView> views;
      for (int ri : ready) {
        sched::NodeView v;
        v.replica_id = replicas_[ri].id;
        v.assigned.resize(replicas_[ri].pool.size() + replicas_[ri].active.size());
        views.push_back(std::move(v));
      }
      target_id = sched::route_least_outstanding(views);
      if (target_id) ++result_.metrics.routing_decisions;
    }
    if (!target_id) {
      ingress_[r.model_idx].push_back(r.index);
      return false;
    }
    for (int ri : ready) {
      if (replicas_[ri].id == *target_id) {
        r.replica = ri;
        replicas_[ri].pool.push_back(r.index);
        return true;
      }
    }
    assert(false);
    return false;
  }

  void retry_ingress(int model_idx) {
    auto& queue = ingress_[model_idx];
    if (queue.empty()) return;
    // Highest effective priority first under the graph policy, FIFO otherwise.
    std::sort(queue.begin(), queue.end(), [&](int a, int b) {
      const SimRequest& ra = requests_[a];
      const SimRequest& rb = requests_[b];
      if (policy_.priority_graph) {
        double ea = sched::effective_priority(ra.env.base_priority, ra.env.enqueue_time, now_,
                                              policy_.aging_rate);
        double eb = sched::effective_priority(rb.env.base_priority, rb.env.enqueue_time, now_,
                                              policy_.aging_rate);
        if (ea != eb) return ea > eb;
      }
      if (ra.env.enqueue_time != rb.env.enqueue_time) {
        return ra.env.enqueue_time < rb.env.enqueue_time;
      }
      return ra.id < rb.id;
    });
    while (!queue.empty()) {
      int idx = queue.front();
      queue.erase(queue.begin());
      if (!route_request(requests_[idx])) {
        // route_request re-queued it at the back; stop retrying.
        auto& q = ingress_[model_idx];
        std::rotate(q.rbegin(), q.rbegin() + 1, q.rend());
        break;
      }
    }
  }

  std::map<std::string, int64_t> model_queue_depths() const {
    std::map<std::string, int64_t> depths;
    for (const auto& m : cluster_.models) depths[m.model_id] = 0;
    for (const auto& [mi, q] : ingress_) {
      depths[cluster_.models[mi].model_id] += static_cast<int64_t>(q.size());
    }
    for (const auto& rep : replicas_) {
      if (rep.status == Replica::Status::Off) continue;
      depths[cluster_.models[rep.model_idx].model_id] +=
          static_cast<int64_t>(rep.pool.size());
    }
    return depths;
  }

  // ---- worker ------------------------------------------------------------

  void on_window_tick() {
    for (auto& rep : replicas_) {
      if (rep.status == Replica::Status::Ready || rep.status == Replica::Status::Draining) {
        admit_on(rep);
      }
    }
    if (completed_ < total_workflows()) {
      ++window_index_;
      push(static_cast<double>(window_index_) * (policy_.window_ms / 1000.0), kWindowTick, -1);
    }
  }

  void admit_on(Replica& rep) {
    if (rep.pool.empty()) return;
    const ModelSpec& model = cluster_.models[rep.model_idx];
    int64_t slots = model.max_batch - static_cast<int64_t>(rep.active.size());
    if (slots <= 0) return;
    std::vector<int> admitted;
    if (policy_.priority_graph || policy_.routing_statistical) {
      std::vector<sched::QueueItem> items;
      items.reserve(rep.pool.size());
      for (int idx : rep.pool) {
        const SimRequest& r = requests_[idx];
        items.push_back({r.id, r.env.base_priority, r.env.enqueue_time,
                         reservation_of(r).tokens()});
      }
      int64_t active_res = 0;
      for (int idx : rep.active) active_res += reservation_of(requests_[idx]).tokens();
      for (size_t pos : sched::form_batch(items, active_res, model.kv_capacity, now_,
                                          policy_.aging_rate)) {
        if (static_cast<int64_t>(admitted.size()) >= slots) break;
        admitted.push_back(rep.pool[pos]);
      }
    } else {
      // Reactive FCFS: arrival order, admitted while the actual footprint fits.
      std::vector<int> order = rep.pool;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (requests_[a].env.enqueue_time != requests_[b].env.enqueue_time) {
          return requests_[a].env.enqueue_time < requests_[b].env.enqueue_time;
        }
        return requests_[a].id < requests_[b].id;
      });
      int64_t actual = 0;
      for (int idx : rep.active) {
        actual += requests_[idx].prompt_len + requests_[idx].env.tokens_generated;
      }
      for (int idx : order) {
        if (static_cast<int64_t>(admitted.size()) >= slots) break;
        const SimRequest& r = requests_[idx];
        int64_t need = r.prompt_len + r.env.tokens_generated;
        if (actual + need > model.kv_capacity) break;
        actual += need;
        admitted.push_back(idx);
      }
    }
    for (int idx : admitted) start_prefill(rep, requests_[idx]);
  }

  void start_prefill(Replica& rep, SimRequest& r) {
    const ModelSpec& model = cluster_.models[rep.model_idx];
    TokenSeq seq = r.prompt;
    for (int64_t i = 0; i < r.env.tokens_generated; ++i) {
      seq.push_back(workflow::response_token(r.id, static_cast<size_t>(i)));
    }
    int64_t len = static_cast<int64_t>(seq.size());
    auto match = rep.cache.lookup(seq, &l3_);
    int64_t needed = len - match.l1;
    auto evict = cache::evict_for_space(rep.cache, Tier::L1, needed, registry_,
                                        policy_.cache_speculative);
    if (!evict.satisfied) return;  // physically blocked this window

    if (rep.bg.active) cancel_background(rep);

    double t_pf = prefill_time(len, match, model);
    int64_t reusable = std::max({match.l1, match.l2, match.l3});
    int64_t l2_part = std::max<int64_t>(std::min(reusable, match.l2) - match.l1, 0);
    int64_t l3_part = std::max<int64_t>(reusable - std::max(match.l1, match.l2), 0);
    result_.metrics.reused_l1 += match.l1;
    result_.metrics.reused_l2 += l2_part;
    result_.metrics.reused_l3 += l3_part;
    result_.metrics.total_prompt_tokens += len;

    // Promotion copies upward then frees the lower entries.
    Lineage lineage{workflows_[r.workflow].id, r.role};
    if (l2_part > 0) erase_chain_span(rep.cache.tier(Tier::L2), seq, match.l1, match.l1 + l2_part);
    if (l3_part > 0) {
      erase_chain_span(l3_.store(), seq, std::max(match.l1, match.l2), reusable);
    }
    rep.cache.insert_chain(Tier::L1, seq, len, lineage, now_, +1);
    r.pinned_seq = std::move(seq);
    r.pinned_upto = len;
    r.pinned = true;

    rep.pool.erase(std::remove(rep.pool.begin(), rep.pool.end(), r.index), rep.pool.end());
    rep.active.push_back(r.index);
    r.env.state = RequestState::Prefilling;
    if (r.first_prefill_start < 0) {
      r.first_prefill_start = now_;
      queue_delays_.push_back(now_ - r.create_time);
    }
    ++r.epoch;
    // One prefill at a time per replica; decode overlaps (chunked-prefill
    // style), queued prefills wait for the unit.
    double start = std::max(now_, rep.prefill_busy_until);
    rep.prefill_busy_until = start + t_pf;
    push(rep.prefill_busy_until, kPrefillDone, r.index, r.epoch);
  }

  static void erase_chain_span(cache::TierStore& store, const TokenSeq& tokens, int64_t from,
                               int64_t to) {
    auto hashes = cache::chain_boundary_hashes(tokens);
    int64_t total = static_cast<int64_t>(tokens.size());
    for (size_t i = 0; i < hashes.size(); ++i) {
      int64_t span_end = std::min<int64_t>(static_cast<int64_t>(i + 1) * cache::kBlockTokens,
                                           total);
      if (span_end <= from || span_end > to) continue;
      if (const cache::CacheBlock* b = store.find_chain(hashes[i])) {
        if (!b->pinned()) store.erase(b->block_id);
      }
    }
  }

  void on_prefill_done(int ridx, uint64_t epoch) {
    SimRequest& r = requests_[ridx];
    if (r.epoch != epoch || r.env.state != RequestState::Prefilling) return;
    r.env.state = RequestState::Decoding;
    if (r.ttft < 0) {
      r.ttft = now_ - r.create_time;
      ttft_samples_.push_back(r.ttft);
    }
    if (options_.record_event_log) {
      log_event("prefill_done", r.id + "|r" + std::to_string(replicas_[r.replica].id));
    }
    last_progress_ = now_;
    ensure_tick(replicas_[r.replica]);
  }

  void ensure_tick(Replica& rep) {
    if (rep.tick_scheduled) return;
    int n = 0;
    for (int idx : rep.active) {
      if (requests_[idx].env.state == RequestState::Decoding) ++n;
    }
    if (n == 0) return;
    // The next interval is priced at the decoder count seen now.
    rep.tick_scheduled = true;
    ++rep.tick_epoch;
    push(now_ + decode_interval(cluster_.models[rep.model_idx], n), kDecodeTick,
         static_cast<int>(&rep - replicas_.data()), rep.tick_epoch);
  }

  void on_decode_tick(int rep_idx, uint64_t epoch) {
    Replica& rep = replicas_[rep_idx];
    if (epoch != rep.tick_epoch) return;
    rep.tick_scheduled = false;
    std::vector<int> decoding;
    for (int idx : rep.active) {
      if (requests_[idx].env.state == RequestState::Decoding) decoding.push_back(idx);
    }
    if (decoding.empty()) return;

    std::vector<int> completed;
    for (int idx : decoding) {
      SimRequest& r = requests_[idx];
      r.env.tokens_generated += 1;
      r.decode_overhead += 1;
      rep.cache.add_decode_tokens(1);
      if (policy_.cache_speculative && !r.prefetch_fired && r.env.sys_annotations &&
          !r.env.sys_annotations->prompt_composition.empty()) {
        int64_t lo = r.env.sys_annotations->predicted_lo;
        int64_t trigger = std::max<int64_t>(
            1, static_cast<int64_t>(std::ceil(policy_.prefetch_trigger_frac *
                                              static_cast<double>(lo))));
        if (r.env.tokens_generated >= trigger) {
          r.prefetch_fired = true;
          fire_prefetch(r);
        }
      }
      if (r.env.tokens_generated >= r.true_len) {
        r.env.state = RequestState::Complete;
        completed.push_back(idx);
      }
    }
    for (int idx : completed) push(now_, kRequestComplete, idx);

    handle_exhaustion(rep);
    ensure_tick(rep);
  }

  void handle_exhaustion(Replica& rep) {
    const ModelSpec& model = cluster_.models[rep.model_idx];
    if (rep.cache.l1_occupancy() <= model.kv_capacity) return;
    cache::evict_for_space(rep.cache, Tier::L1, 0, registry_, policy_.cache_speculative);
    if (rep.cache.l1_occupancy() <= model.kv_capacity) return;
    // Completions emitted this tick release their footprint at the same
    // timestamp; preempting ahead of that release would be spurious.
    int64_t pending_release = 0;
    for (int idx : rep.active) {
      const SimRequest& r = requests_[idx];
      if (r.env.state == RequestState::Complete) {
        pending_release += r.pinned_upto + r.decode_overhead;
      }
    }
    if (rep.cache.l1_occupancy() - pending_release <= model.kv_capacity) return;
    ++result_.metrics.oom_events;
    while (rep.cache.l1_occupancy() > model.kv_capacity) {
      std::vector<int> candidates;
      for (int idx : rep.active) {
        if (requests_[idx].env.state == RequestState::Prefilling ||
            requests_[idx].env.state == RequestState::Decoding) {
          candidates.push_back(idx);
        }
      }
      if (candidates.empty()) break;
      int victim;
      if (policy_.priority_graph) {
        std::vector<sched::QueueItem> items;
        for (int idx : candidates) {
          const SimRequest& r = requests_[idx];
          items.push_back({r.id, r.env.base_priority, r.env.enqueue_time, 0});
        }
        victim = candidates[sched::select_preemption_victim(items, now_, policy_.aging_rate)];
      } else {
        // Reactive baseline: the newest request loses.
        victim = candidates[0];
        for (int idx : candidates) {
          if (requests_[idx].env.enqueue_time > requests_[victim].env.enqueue_time ||
              (requests_[idx].env.enqueue_time == requests_[victim].env.enqueue_time &&
               requests_[idx].id > requests_[victim].id)) {
            victim = idx;
          }
        }
      }
      preempt(rep, requests_[victim]);
      cache::evict_for_space(rep.cache, Tier::L1, 0, registry_, policy_.cache_speculative);
    }
  }

  void preempt(Replica& rep, SimRequest& r) {
    release_pinned(rep, r, /*erase_blocks=*/true);
    rep.cache.add_decode_tokens(-r.decode_overhead);
    r.decode_overhead = 0;
    r.env.state = RequestState::Preempted;
    ++r.epoch;  // invalidates any in-flight prefill completion
    rep.active.erase(std::remove(rep.active.begin(), rep.active.end(), r.index),
                     rep.active.end());
    rep.pool.push_back(r.index);  // original enqueue_time kept: aging credit survives
    ++result_.metrics.preemptions;
  }

  void release_pinned(Replica& rep, SimRequest& r, bool erase_blocks) {
    if (!r.pinned) return;
    rep.cache.unpin_chain(r.pinned_seq, r.pinned_upto);
    if (erase_blocks) {
      // Recomputed from scratch on resume: drop the context blocks that no
      // one else pins.
      erase_chain_span(rep.cache.tier(Tier::L1), r.pinned_seq, 0, r.pinned_upto);
    }
    r.pinned = false;
  }

  // ---- completion ---------------------------------------------------------

  void on_request_complete_event(int ridx) {
    SimRequest& r = requests_[ridx];
    Replica& rep = replicas_[r.replica];
    SimWorkflow& w = workflows_[r.workflow];
    r.complete_time = now_;
    last_progress_ = now_;
    if (options_.record_event_log) log_event("request_complete", r.id);

    TokenSeq response(static_cast<size_t>(r.true_len));
    for (size_t i = 0; i < response.size(); ++i) {
      response[i] = workflow::response_token(r.id, i);
    }
    w.exchanges[r.id].response = response;

    release_pinned(rep, r, /*erase_blocks=*/false);
    rep.cache.add_decode_tokens(-r.decode_overhead);
    r.decode_overhead = 0;
    rep.active.erase(std::remove(rep.active.begin(), rep.active.end(), r.index),
                     rep.active.end());

    TokenSeq full = r.prompt;
    full.insert(full.end(), response.begin(), response.end());
    Lineage lineage{w.id, r.role};
    rep.cache.insert_chain(Tier::L1, full, static_cast<int64_t>(full.size()), lineage, now_, 0);
    if (rep.cache.l1_occupancy() > cluster_.models[rep.model_idx].kv_capacity) {
      cache::evict_for_space(rep.cache, Tier::L1, 0, registry_, policy_.cache_speculative);
    }

    result_.metrics.total_output_tokens += r.true_len;

    profiler::TraceRecord rec;
    rec.workflow_type_id = w.type->workflow_type_id;
    rec.workflow_id = w.id;
    rec.step_index = r.step_index;
    rec.parent_step = r.parent_step;
    rec.role_id = r.role;
    rec.prompt_len = r.prompt_len;
    rec.output_len = r.true_len;
    rec.start_time = r.create_time;
    rec.end_time = now_;
    w.trace.push_back(std::move(rec));

    if (policy_.cache_speculative && r.env.position) {
      apply_completion_policy(r, w);
    }

    --w.outstanding;
    if (w.outstanding == 0) {
      if (w.next_stage < static_cast<int>(w.stages.size())) {
        double delay = w.stages[w.next_stage - 1].tool_delay;
        push(now_ + delay, kToolCallDone, w.index, static_cast<uint64_t>(w.next_stage));
      } else {
        finish_workflow(w);
      }
    }
    check_drained(rep);
    retry_ingress(r.model_idx);
  }

  void apply_completion_policy(SimRequest& r, SimWorkflow& w) {
    auto future = workflow::future_roles(*r.env.position);
    registry_.update(w.id, future);
    // The lineage sweep runs cluster-wide so the dead-token invariant holds
    // across every tier, not just the completing node.
    for (auto& rep : replicas_) {
      if (rep.status == Replica::Status::Off) continue;
      auto actions = cache::on_request_complete(r.env, rep.cache);
      for (const auto& a : actions) log_cache(a, rep.id);
      cache::apply_completion(actions, rep.cache, l3_, now_);
    }
    std::vector<uint64_t> dead_l3;
    for (const auto& [id, block] : l3_.store().blocks()) {
      if (block.lineage.workflow_id == w.id && !future.count(block.lineage.role_id)) {
        dead_l3.push_back(id);
      }
    }
    for (uint64_t id : dead_l3) l3_.store().erase(id);

    if (options_.audit_cache_exactness) {
      for (const auto& rep : replicas_) {
        for (Tier t : {Tier::L1, Tier::L2}) {
          for (const auto& [id, block] : rep.cache.tier(t).blocks()) {
            (void)id;
            if (block.pinned()) continue;
            if (block.lineage.workflow_id != w.id) continue;
            if (!future.count(block.lineage.role_id)) {
              throw std::runtime_error("cache exactness violated: dead block survived for " +
                                       block.lineage.role_id);
            }
          }
        }
      }
      ++result_.cache_audit_checks;
    }
  }

  void finish_workflow(SimWorkflow& w) {
    w.done = now_;
    ++completed_;
    --in_flight_;
    result_.metrics.jct_samples.push_back(w.done - w.arrival);
    last_completion_ = now_;
    if (policy_.annotate && !w.trace.empty()) {
      std::sort(w.trace.begin(), w.trace.end(),
                [](const profiler::TraceRecord& a, const profiler::TraceRecord& b) {
                  return a.step_index < b.step_index;
                });
      store_.ingest_trace(w.trace);
      store_.workflow_complete(w.id);
    }
    registry_.drop(w.id);
    w.exchanges.clear();

    if (workload_.arrivals.mode == "closed" && next_arrival_index_ < total_workflows()) {
      push(now_, kArrival, next_arrival_index_++);
    } else if (!pending_arrivals_.empty()) {
      int next = pending_arrivals_.front();
      pending_arrivals_.erase(pending_arrivals_.begin());
      push(now_, kArrival, next);
    }
  }

  void on_tool_call_done(int wf_idx, int stage_idx) {
    if (options_.record_event_log) {
      log_event("tool_call_done", "w" + std::to_string(wf_idx) + "|s" + std::to_string(stage_idx));
    }
    issue_stage(workflows_[wf_idx], stage_idx);
  }

  // ---- staging -------------------------------------------------------------

  bool gpu_idle(const Replica& rep) const { return rep.active.empty() && rep.pool.empty(); }

  void fire_prefetch(SimRequest& r) {
    SimWorkflow& w = workflows_[r.workflow];
    WfHistoryView view(w.exchanges);
    for (const auto& [role, tmpl] : r.env.sys_annotations->prompt_composition) {
      (void)tmpl;
      auto model_it = role_to_model_.find(role);
      if (model_it == role_to_model_.end()) continue;
      auto mi_it = model_index_.find(model_it->second);
      if (mi_it == model_index_.end()) continue;
      auto ready = ready_replicas(mi_it->second);
      if (ready.empty()) continue;

      // Stage where the prefix is already warmest; ties to the lowest id.
      workflow::RequestEnvelope probe = r.env;
      auto prefix = workflow::assemble_resolvable_prefix(tmpl, view);
      int target = ready[0];
      int64_t best_l2 = -1;
      for (int ri : ready) {
        int64_t l2 = prefix.tokens.empty()
                         ? 0
                         : replicas_[ri].cache.lookup(prefix.tokens, nullptr).l2;
        if (l2 > best_l2 || (l2 == best_l2 && replicas_[ri].id < replicas_[target].id)) {
          target = ri;
          best_l2 = l2;
        }
      }
      Replica& rep = replicas_[target];
      // Narrow the envelope to this successor so the manager stages one entry.
      probe.sys_annotations->prompt_composition = {{role, tmpl}};
      auto actions =
          cache::on_prefetch_requested(probe, rep.cache, l3_, view, gpu_idle(rep));
      for (const auto& action : actions) apply_stage_action(rep, action);
    }
  }

  void apply_stage_action(Replica& rep, const cache::StageAction& action) {
    using Kind = cache::StageAction::Kind;
    const ModelSpec& model = cluster_.models[rep.model_idx];
    std::ostringstream line;
    line << "{\"time\":" << now_ << ",\"replica\":" << rep.id << ",\"successor\":\""
         << action.successor_role << "\",\"action\":\"";
    switch (action.kind) {
      case Kind::Skip:
        line << "skip\",\"reason\":\"" << action.reason << "\"}";
        result_.cache_log.push_back(line.str());
        return;
      case Kind::PromoteToHost: {
        line << "promote_to_host\",\"tokens\":" << (action.to - action.from) << "}";
        result_.cache_log.push_back(line.str());
        int tidx = static_cast<int>(transfers_.size());
        transfers_.push_back({static_cast<int>(&rep - replicas_.data()), action.tokens,
                              action.from, action.to, action.lineage, false, 0});
        push(now_ + static_cast<double>(action.to - action.from) / model.l3_fetch_rate,
             kTransferDone, tidx);
        return;
      }
      case Kind::BackgroundPrefill: {
        line << "background_prefill\",\"tokens\":" << (action.to - action.from) << "}";
        result_.cache_log.push_back(line.str());
        rep.bg.tokens = action.tokens;
        rep.bg.from = action.from;
        rep.bg.to = action.to;
        rep.bg.lineage = action.lineage;
        rep.bg.started = now_;
        rep.bg.active = true;
        ++rep.bg.epoch;
        int tidx = static_cast<int>(transfers_.size());
        transfers_.push_back({static_cast<int>(&rep - replicas_.data()), action.tokens,
                              action.from, action.to, action.lineage, true, rep.bg.epoch});
        push(now_ + static_cast<double>(action.to - action.from) / model.prefill_rate,
             kTransferDone, tidx);
        return;
      }
    }
  }

  void cancel_background(Replica& rep) {
    if (!rep.bg.active) return;
    const ModelSpec& model = cluster_.models[rep.model_idx];
    int64_t done = static_cast<int64_t>((now_ - rep.bg.started) * model.prefill_rate);
    int64_t upto = rep.bg.from + std::max<int64_t>(done, 0);
    upto = std::min(upto, rep.bg.to);
    if (upto > 0) {
      stage_into_l2(rep, rep.bg.tokens, upto, rep.bg.lineage);  // completed blocks kept
    }
    rep.bg.active = false;
    ++rep.bg.epoch;
  }

  void stage_into_l2(Replica& rep, const TokenSeq& tokens, int64_t upto, const Lineage& lineage) {
    int64_t already = rep.cache.lookup(tokens, nullptr).l2;
    int64_t needed = std::max<int64_t>(upto - already, 0);
    if (needed == 0) return;
    auto evict = cache::evict_for_space(rep.cache, Tier::L2, needed, registry_,
                                        policy_.cache_speculative);
    if (!evict.satisfied) return;  // host tier saturated with newer data
    rep.cache.insert_chain(Tier::L2, tokens, upto, lineage, now_, 0);
  }

  void on_transfer_done(int tidx) {
    const Transfer& tr = transfers_[tidx];
    Replica& rep = replicas_[tr.replica];
    if (tr.background) {
      if (!rep.bg.active || rep.bg.epoch != tr.epoch) return;  // cancelled
      rep.bg.active = false;
      stage_into_l2(rep, tr.tokens, tr.to, tr.lineage);
      result_.metrics.staged_tokens_l2 += tr.to - tr.from;
      return;
    }
    stage_into_l2(rep, tr.tokens, tr.to, tr.lineage);
    erase_chain_span(l3_.store(), tr.tokens, tr.from, tr.to);  // promotion frees the lower copy
    result_.metrics.staged_tokens_l2 += tr.to - tr.from;
  }

  // ---- autoscaling -----------------------------------------------------------

  void on_load_done(int rep_idx) {
    Replica& rep = replicas_[rep_idx];
    if (rep.status != Replica::Status::Loading) return;
    rep.status = Replica::Status::Ready;
    log_scale("ready", rep);
    retry_ingress(rep.model_idx);
  }

  void check_drained(Replica& rep) {
    if (rep.status != Replica::Status::Draining) return;
    if (!rep.pool.empty() || !rep.active.empty()) return;
    rep.status = Replica::Status::Off;
    cancel_background(rep);
    log_scale("deprovision", rep);
    std::ostringstream line;
    line << "{\"time\":" << now_ << ",\"replica\":" << rep.id
         << ",\"outstanding\":" << (rep.pool.size() + rep.active.size()) << "}";
    result_.drain_log.push_back(line.str());
  }

  double mean_service_time(int model_idx) const {
    const ModelSpec& m = cluster_.models[model_idx];
    double total = 0.0;
    int count = 0;
    for (const auto& type : workload_.types) {
      for (const auto& [rid, role] : type.roles) {
        if (role.model_id != m.model_id) continue;
        auto prof = store_.role_profile(type.workflow_type_id, rid);
        double mean_out = prof.sample_count > 0 ? prof.mean_len : role.mean_len;
        total += mean_out / m.decode_rate_base + role.mean_len / m.prefill_rate;
        ++count;
      }
    }
    if (count == 0) return 1.0;
    return std::max(total / count, 1e-6);
  }

  // Expected KV-capacity turnovers per horizon: how many tokens one replica
  // can actually push through the horizon window, relative to its capacity.
  // Concurrency is bounded by the reservation level, decode throughput by the
  // batch penalty.
  double service_factor(int model_idx, double horizon_wall) const {
    const ModelSpec& m = cluster_.models[model_idx];
    double mean_res = 0.0, mean_prompt = 0.0, mean_out = 0.0;
    int count = 0;
    for (const auto& type : workload_.types) {
      for (const auto& [rid, role] : type.roles) {
        if (role.model_id != m.model_id) continue;
        auto prof = store_.role_profile(type.workflow_type_id, rid);
        double out = prof.sample_count > 0 ? prof.mean_len : role.mean_len;
        double upper = prof.sample_count > 0 ? static_cast<double>(prof.upper)
                                             : static_cast<double>(policy_.global_max_output);
        double prompt = role.sys_prompt_tokens + std::min<double>(role.carry_tokens, out);
        mean_res += prompt + upper;
        mean_prompt += prompt;
        mean_out += out;
        ++count;
      }
    }
    if (count == 0) return 1.0;
    mean_res /= count;
    mean_prompt /= count;
    mean_out /= count;
    double n_star = std::max(1.0, static_cast<double>(m.kv_capacity) / std::max(mean_res, 1.0));
    double agg_decode = n_star * m.decode_rate_base / (1.0 + m.batch_penalty * (n_star - 1.0));
    double token_rate = mean_out > 0.0 ? agg_decode * (mean_prompt + mean_out) / mean_out
                                       : agg_decode;
    return std::max(horizon_wall * token_rate / static_cast<double>(m.kv_capacity), 1e-6);
  }

  void on_scale_eval() {
    // Metrics sampling rides the evaluation cadence.
    auto depths = model_queue_depths();
    for (const auto& [model, depth] : depths) {
      result_.metrics.queue_depth_series[model].emplace_back(now_,
                                                             static_cast<double>(depth));
    }
    if (completed_ < total_workflows() && now_ - last_progress_ > options_.stall_timeout &&
        last_progress_ >= 0.0) {
      throw std::runtime_error("simulation stalled; " + stall_diagnostic());
    }

    if (policy_.autoscaling) run_autoscaler();

    if (completed_ < total_workflows()) {
      ++eval_index_;
      push(static_cast<double>(eval_index_) * policy_.eval_period_s, kScaleEval, -1);
    }
  }

  void run_autoscaler() {
    std::vector<scale::ActiveRequestView> views;
    for (const auto& r : requests_) {
      if (r.complete_time >= 0 || !r.env.position) continue;
      bool waiting = r.env.state == RequestState::Queued ||
                     r.env.state == RequestState::Preempted;
      views.push_back({*r.env.position, r.role, waiting});
    }
    std::map<std::string, scale::RoleLoadModel> role_models;
    for (const auto& type : workload_.types) {
      for (const auto& [rid, role] : type.roles) {
        auto prof = store_.role_profile(type.workflow_type_id, rid);
        double mean_out = prof.sample_count > 0 ? prof.mean_len : role.mean_len;
        double mean_prompt = role.sys_prompt_tokens + std::min<double>(role.carry_tokens,
                                                                       mean_out);
        role_models[rid] = {role.model_id, mean_prompt, mean_out};
      }
    }
    auto demand = scale::estimate_imminent_demand(views, policy_.horizon_steps, role_models);
    // Liveness floor: a model with queued work must never sit at zero
    // replicas, even when every waiter is unprofiled and invisible to the
    // demand forecast.
    auto depths = model_queue_depths();
    for (const auto& [model_id, depth] : depths) {
      if (depth > 0) demand[model_id] = std::max(demand[model_id], 1.0);
    }

    double mean_step = 0.0;
    int model_count = 0;
    for (size_t mi = 0; mi < cluster_.models.size(); ++mi) {
      mean_step += mean_service_time(static_cast<int>(mi));
      ++model_count;
    }
    mean_step = model_count ? mean_step / model_count : 1.0;
    double horizon_wall = policy_.horizon_steps * mean_step;

    std::vector<scale::ModelScaleState> states;
    int64_t occupied = 0;
    for (size_t mi = 0; mi < cluster_.models.size(); ++mi) {
      const ModelSpec& m = cluster_.models[mi];
      int64_t current = 0;
      for (const auto& rep : replicas_) {
        if (rep.model_idx != static_cast<int>(mi)) continue;
        if (rep.status == Replica::Status::Ready || rep.status == Replica::Status::Loading) {
          ++current;
        }
        if (rep.status != Replica::Status::Off) occupied += m.slot_cost;
      }
      double factor = service_factor(static_cast<int>(mi), horizon_wall);
      states.push_back({m.model_id, current, static_cast<double>(m.kv_capacity), factor,
                        m.slot_cost});
    }

    auto plan = scale::autoscale_cluster(demand, states, cluster_.gpu_budget, occupied);

    // Scale-ups act immediately (warming ahead of the burst); scale-downs
    // require the low-demand signal to persist for a load-latency window,
    // otherwise brief lulls churn replicas through 30s reloads.
    double hysteresis = std::max(horizon_wall, cluster_.model_load_s);
    std::vector<scale::ScalePlan::Action> confirmed_downs;
    for (const auto& m : cluster_.models) {
      bool wants_down = false;
      for (const auto& down : plan.scale_down) {
        if (down.model_id == m.model_id) wants_down = true;
      }
      if (!wants_down) {
        down_pending_since_.erase(m.model_id);
        continue;
      }
      auto it = down_pending_since_.find(m.model_id);
      if (it == down_pending_since_.end()) {
        down_pending_since_[m.model_id] = now_;
        continue;
      }
      if (now_ - it->second >= hysteresis) {
        for (const auto& down : plan.scale_down) {
          if (down.model_id == m.model_id) confirmed_downs.push_back(down);
        }
      }
    }
    plan.scale_down = std::move(confirmed_downs);

    for (const auto& down : plan.scale_down) {
      int mi = model_index_.at(down.model_id);
      std::vector<int> candidates;
      for (size_t i = 0; i < replicas_.size(); ++i) {
        if (replicas_[i].model_idx == mi && (replicas_[i].status == Replica::Status::Ready ||
                                             replicas_[i].status == Replica::Status::Loading)) {
          candidates.push_back(static_cast<int>(i));
        }
      }
      std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        const Replica& ra = replicas_[a];
        const Replica& rb = replicas_[b];
        bool la = ra.status == Replica::Status::Loading;
        bool lb = rb.status == Replica::Status::Loading;
        if (la != lb) return la;  // cancel loads first, they cost nothing
        size_t wa = ra.pool.size() + ra.active.size();
        size_t wb = rb.pool.size() + rb.active.size();
        if (wa != wb) return wa < wb;
        return ra.id > rb.id;
      });
      for (int i = 0; i < down.count && i < static_cast<int>(candidates.size()); ++i) {
        Replica& rep = replicas_[candidates[i]];
        ++result_.metrics.scale_downs;
        if (rep.status == Replica::Status::Loading) {
          rep.status = Replica::Status::Off;
          log_scale("cancel_load", rep);
        } else {
          rep.status = Replica::Status::Draining;
          log_scale("drain", rep);
          check_drained(rep);
        }
      }
    }

    for (const auto& up : plan.scale_up) {
      int mi = model_index_.at(up.model_id);
      const ModelSpec& m = cluster_.models[mi];
      int64_t remaining = up.count;
      // Draining replicas return to service before anything new loads.
      for (auto& rep : replicas_) {
        if (remaining == 0) break;
        if (rep.model_idx == mi && rep.status == Replica::Status::Draining) {
          rep.status = Replica::Status::Ready;
          --remaining;
          ++result_.metrics.scale_ups;
          log_scale("undrain", rep);
          retry_ingress(mi);
        }
      }
      while (remaining > 0) {
        int64_t used = 0;
        for (const auto& rep : replicas_) {
          if (rep.status != Replica::Status::Off) {
            used += cluster_.models[rep.model_idx].slot_cost;
          }
        }
        if (used + m.slot_cost > cluster_.gpu_budget) break;  // deferred to the next eval
        replicas_.emplace_back(next_replica_id_++, mi, m.kv_capacity, m.l2_capacity);
        Replica& rep = replicas_.back();
        rep.status = Replica::Status::Loading;
        ++result_.metrics.scale_ups;
        log_scale("load", rep);
        push(now_ + cluster_.model_load_s, kLoadDone,
             static_cast<int>(replicas_.size()) - 1);
        --remaining;
      }
    }
  }

  // ---- logging / finalize ------------------------------------------------

  void log_event(const char* kind, const std::string& detail) {
    std::ostringstream line;
    line.setf(std::ios::fixed);
    line.precision(6);
    line << now_ << '|' << kind << '|' << detail;
    result_.event_log.push_back(line.str());
  }

  void log_routing(const SimRequest& r, const sched::RoutingDecision& d) {
    std::ostringstream line;
    line << "{\"time\":" << now_ << ",\"request_id\":\"" << r.id << "\",\"target\":"
         << (d.target ? std::to_string(*d.target) : "null") << ",\"headroom\":" << d.headroom
         << ",\"oom_bound\":" << d.oom_bound << ",\"tiebreak\":"
         << (d.cache_tiebreak_used ? "true" : "false") << "}";
    result_.routing_log.push_back(line.str());
  }

  void log_cache(const cache::CompletionAction& a, int replica_id) {
    std::ostringstream line;
    line << "{\"time\":" << now_ << ",\"replica\":" << replica_id << ",\"action\":\""
         << (a.kind == cache::CompletionAction::Kind::Free ? "free" : "retain_write_l3")
         << "\",\"block_id\":" << a.block_id << ",\"tier\":\"" << cache::tier_name(a.tier)
         << "\"}";
    result_.cache_log.push_back(line.str());
  }

  void log_scale(const char* action, const Replica& rep) {
    std::ostringstream line;
    line << "{\"time\":" << now_ << ",\"model\":\""
         << cluster_.models[rep.model_idx].model_id << "\",\"action\":\"" << action
         << "\",\"replica_id\":" << rep.id << "}";
    result_.scale_log.push_back(line.str());
  }

  std::string stall_diagnostic() const {
    std::ostringstream out;
    out << "t=" << now_ << " completed=" << completed_ << "/" << total_workflows();
    for (const auto& [model, depth] : model_queue_depths()) {
      out << " queue[" << model << "]=" << depth;
    }
    return out.str();
  }

  void finalize_metrics() {
    MetricsReport& m = result_.metrics;
    m.policy = policy_.name;
    m.seed = options_.seed;
    m.workload_id = workload_.types.empty() ? "" : workload_.types[0].workflow_type_id;
    m.workflows_completed = completed_;
    m.mean_jct = mean_of(m.jct_samples);
    m.p95_jct = p95_of(m.jct_samples);
    m.makespan = std::max(last_completion_ - std::max(first_arrival_, 0.0), 0.0);
    m.throughput_tokens_per_s =
        m.makespan > 0.0 ? static_cast<double>(m.total_output_tokens) / m.makespan : 0.0;
    m.mean_ttft = mean_of(ttft_samples_);
    m.mean_queue_delay = mean_of(queue_delays_);
    if (m.total_prompt_tokens > 0) {
      m.hit_ratio_l1 = static_cast<double>(m.reused_l1) / m.total_prompt_tokens;
      m.hit_ratio_l2 = static_cast<double>(m.reused_l2) / m.total_prompt_tokens;
      m.hit_ratio_l3 = static_cast<double>(m.reused_l3) / m.total_prompt_tokens;
    }
    for (const auto& [model, pts] : m.queue_depth_series) {
      double total = 0.0;
      for (const auto& [t, d] : pts) {
        (void)t;
        total += d;
      }
      m.mean_queue_depth[model] = pts.empty() ? 0.0 : total / static_cast<double>(pts.size());
    }
  }

  // ---- members -------------------------------------------------------------

  WorkloadSpec workload_;
  ClusterConfig cluster_;
  PolicyConfig policy_;
  SimOptions options_;

  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  uint64_t seq_ = 0;
  double now_ = 0.0;

  Rng arrival_rng_;
  profiler::ProfileStore store_;
  cache::FutureRegistry registry_;
  SharedL3 l3_;

  std::map<std::string, std::shared_ptr<const workflow::PathExpr>> ground_truth_;
  std::map<std::string, int> model_index_;
  std::map<std::string, std::string> role_to_model_;

  std::vector<SimWorkflow> workflows_;
  std::vector<SimRequest> requests_;
  std::vector<Replica> replicas_;
  std::vector<Transfer> transfers_;
  std::map<int, std::vector<int>> ingress_;  // model idx -> waiting request indices
  std::vector<int> pending_arrivals_;

  int next_replica_id_ = 0;
  int next_arrival_index_ = 0;
  int in_flight_ = 0;
  int completed_ = 0;
  double first_arrival_ = -1.0;
  double last_completion_ = 0.0;
  double last_progress_ = 0.0;

  std::vector<double> ttft_samples_;
  std::vector<double> queue_delays_;
  std::map<std::string, double> down_pending_since_;
  int64_t window_index_ = 0;
  int64_t eval_index_ = 0;

  SimResult result_;
};

}  // namespace

SimResult run_simulation(const WorkloadSpec& workload, const ClusterConfig& cluster,
                         const PolicyConfig& policy, const SimOptions& options) {
  Engine engine(workload, cluster, policy, options);
  return engine.run();
}

}  // namespace pythia::sim
