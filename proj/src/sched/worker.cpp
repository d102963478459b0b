// SPDX-License-Identifier: Apache-2.0

#include "pythia/sched/worker.hpp"

#include <algorithm>
#include <cassert>
#include <numeric>

namespace pythia::sched {

double effective_priority(double base_priority, double enqueue_time, double now,
                          double aging_rate) {
  return base_priority + aging_rate * (now - enqueue_time);
}

std::vector<size_t> form_batch(const std::vector<QueueItem>& pool, int64_t active_reservation,
                               int64_t capacity, double now, double aging_rate) {
  std::vector<size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    double ea = effective_priority(pool[a].base_priority, pool[a].enqueue_time, now, aging_rate);
    double eb = effective_priority(pool[b].base_priority, pool[b].enqueue_time, now, aging_rate);
    if (ea != eb) return ea > eb;
    if (pool[a].enqueue_time != pool[b].enqueue_time) {
      return pool[a].enqueue_time < pool[b].enqueue_time;
    }
    return pool[a].request_id < pool[b].request_id;
  });
  std::vector<size_t> admitted;
  int64_t reserved = active_reservation;
  for (size_t idx : order) {
    if (reserved + pool[idx].reservation > capacity) break;  // strict priority prefix
    reserved += pool[idx].reservation;
    admitted.push_back(idx);
  }
  return admitted;
}

size_t select_preemption_victim(const std::vector<QueueItem>& active, double now,
                                double aging_rate) {
  assert(!active.empty());
  size_t victim = 0;
  double victim_eff =
      effective_priority(active[0].base_priority, active[0].enqueue_time, now, aging_rate);
  for (size_t i = 1; i < active.size(); ++i) {
    double eff = effective_priority(active[i].base_priority, active[i].enqueue_time, now,
                                    aging_rate);
    bool better = eff < victim_eff ||
                  (eff == victim_eff && active[i].enqueue_time > active[victim].enqueue_time) ||
                  (eff == victim_eff && active[i].enqueue_time == active[victim].enqueue_time &&
                   active[i].request_id > active[victim].request_id);
    if (better) {
      victim = i;
      victim_eff = eff;
    }
  }
  return victim;
}

}  // namespace pythia::sched
