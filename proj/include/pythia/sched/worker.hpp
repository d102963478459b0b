// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pythia::sched {

// Queue-side view of one request for window scheduling.
struct QueueItem {
  std::string request_id;
  double base_priority = 0.0;
  double enqueue_time = 0.0;
  int64_t reservation = 0;  // prompt + max(upper, generated)
};

// base_priority plus the aging credit accumulated since ingress. Resumed
// requests keep their original enqueue_time, so the credit survives
// preemption.
double effective_priority(double base_priority, double enqueue_time, double now,
                          double aging_rate);

// Highest-effective-priority subset of the pool that fits in the KV budget:
// sorts by descending effective priority (ties: earlier enqueue, then
// request_id) and admits greedily while the summed reservations of
// active-plus-admitted stay within capacity. Returns indices into `pool` in
// admission order.
std::vector<size_t> form_batch(const std::vector<QueueItem>& pool, int64_t active_reservation,
                               int64_t capacity, double now, double aging_rate);

// The active request with the lowest effective priority; ties prefer the one
// with the least aging credit, then the larger request_id.
size_t select_preemption_victim(const std::vector<QueueItem>& active, double now,
                                double aging_rate);

}  // namespace pythia::sched
