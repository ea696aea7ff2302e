#pragma once

// Test-only reference computations. Nothing here calls into the code paths
// it is used to check: the Monte Carlo oracle uses std::mt19937_64 and a
// token-by-token cost walk instead of run decomposition.

#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "ppd/trace.hpp"

namespace ppd::testing {

struct OracleMoments {
  double mean_latency = 0.0;
  double mean_compute = 0.0;
  double mean_runs = 0.0;
};

/// Brute-force simulation: walk the ell tokens; a token that starts a run
/// costs d time units, a token continuing a run costs d_bar. Each token
/// also pays k*(d-d_bar) units of speculative compute.
inline OracleMoments brute_force_moments(std::int64_t d, std::int64_t d_bar, std::int64_t k,
                                         std::int64_t ell, double p, std::int64_t trials,
                                         std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::bernoulli_distribution match(p);
  double lat_sum = 0.0;
  double cmp_sum = 0.0;
  double runs_sum = 0.0;
  for (std::int64_t t = 0; t < trials; ++t) {
    std::int64_t latency = d;
    std::int64_t runs = 1;
    for (std::int64_t tok = 2; tok <= ell; ++tok) {
      if (match(gen)) {
        latency += d_bar;
      } else {
        latency += d;
        ++runs;
      }
    }
    const std::int64_t compute = latency + k * (d - d_bar) * ell;
    lat_sum += static_cast<double>(latency);
    cmp_sum += static_cast<double>(compute);
    runs_sum += static_cast<double>(runs);
  }
  const auto n = static_cast<double>(trials);
  return {lat_sum / n, cmp_sum / n, runs_sum / n};
}

/// Synthetic trace with a planted match probability at cutoff `plant_k`:
/// with probability p the final token is placed at a uniformly chosen slot
/// among the first plant_k early candidates; otherwise it is absent from
/// the list entirely. Positions cycle through 1..positions_per_example.
inline std::vector<trace::TraceRecord> synthetic_trace(std::int64_t n, double p, std::int64_t k_max,
                                                       std::int64_t plant_k, std::uint64_t seed,
                                                       std::int64_t positions_per_example = 16) {
  std::mt19937_64 gen(seed);
  std::bernoulli_distribution match(p);
  std::uniform_int_distribution<std::int64_t> token(1, 50000);
  std::uniform_int_distribution<std::int64_t> slot(0, plant_k - 1);
  std::vector<trace::TraceRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    trace::TraceRecord r;
    r.example_id = "ex" + std::to_string(i / positions_per_example);
    r.position = 1 + i % positions_per_example;
    std::set<std::int64_t> used;
    while (static_cast<std::int64_t>(r.early_topk.size()) < k_max) {
      const auto t = token(gen);
      if (used.insert(t).second) r.early_topk.push_back(t);
    }
    if (match(gen)) {
      r.final = r.early_topk[static_cast<std::size_t>(slot(gen))];
    } else {
      r.final = 0;  // never drawn as a candidate
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ppd::testing
