// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pythia::sim {

// Deterministic random source. All draws go through hand-rolled transforms
// (not std::*_distribution) so identical seeds replay identically on any
// platform and standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  double uniform01() {
    // 53-bit mantissa in [0, 1).
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
    return lo + static_cast<int64_t>(engine_() % static_cast<uint64_t>(hi - lo + 1));
  }

  double normal() {
    double u1 = uniform01(), u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Parameterized by mean and coefficient of variation.
  double lognormal(double mean, double cv) {
    if (mean <= 0.0) return 0.0;
    if (cv <= 0.0) return mean;
    double sigma2 = std::log(1.0 + cv * cv);
    double mu = std::log(mean) - sigma2 / 2.0;
    return std::exp(mu + std::sqrt(sigma2) * normal());
  }

  double exponential(double mean) {
    double u = uniform01();
    if (u < 1e-300) u = 1e-300;
    return -mean * std::log(u);
  }

  // Interarrival time with a target coefficient of variation: cv 0 is a
  // deterministic spacing, cv 1 exponential, cv > 1 a balanced two-phase
  // hyperexponential.
  double interarrival(double mean, double cv) {
    if (cv <= 0.0) return mean;
    if (cv <= 1.0) {
      // Mix of deterministic and exponential hits intermediate cv exactly:
      // X = (1-w)*mean + w*Exp(mean) has cv = w... scaled mixture below.
      if (cv >= 1.0) return exponential(mean);
      double w = cv;  // sd = w * mean
      return (1.0 - w) * mean + w * exponential(mean);
    }
    double c2 = cv * cv;
    double p = 0.5 * (1.0 + std::sqrt((c2 - 1.0) / (c2 + 1.0)));
    double l1 = 2.0 * p / mean;
    double l2 = 2.0 * (1.0 - p) / mean;
    if (uniform01() < p) return exponential(1.0 / l1);
    return exponential(1.0 / l2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pythia::sim
