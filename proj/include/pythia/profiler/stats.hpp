// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace pythia::profiler {

// Nearest-rank empirical quantile: the ceil(q * n)-th order statistic. This
// is what keeps the router's distribution-free exceedance guarantee intact.
template <typename T>
T nearest_rank_quantile(std::vector<T> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("quantile of empty sample set");
  std::sort(samples.begin(), samples.end());
  double rank = std::ceil(q * static_cast<double>(samples.size()));
  size_t idx = rank <= 1.0 ? 0 : static_cast<size_t>(rank) - 1;
  idx = std::min(idx, samples.size() - 1);
  return samples[idx];
}

template <typename T>
double sample_mean(const std::vector<T>& samples) {
  if (samples.empty()) return 0.0;
  double s = 0.0;
  for (const auto& v : samples) s += static_cast<double>(v);
  return s / static_cast<double>(samples.size());
}

template <typename T>
double sample_cv(const std::vector<T>& samples) {
  if (samples.size() < 2) return 0.0;
  double m = sample_mean(samples);
  if (m == 0.0) return 0.0;
  double ss = 0.0;
  for (const auto& v : samples) {
    double d = static_cast<double>(v) - m;
    ss += d * d;
  }
  double sd = std::sqrt(ss / static_cast<double>(samples.size() - 1));
  return sd / m;
}

}  // namespace pythia::profiler
