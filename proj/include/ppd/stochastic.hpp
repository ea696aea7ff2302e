#pragma once

// Stochastic run-length model: i.i.d. Bernoulli(p) early-prediction matches,
// runs split at every failure, and a seeded Monte Carlo estimator of the
// latency / compute totals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ppd/core_types.hpp"
#include "ppd/rng.hpp"

namespace ppd::stochastic {

/// ell-1 independent Bernoulli(p) bits drawn from `gen`.
inline MatchSequence sample_match_sequence(rng::SplitMix64& gen, double p_correct,
                                           std::int64_t ell) {
  const double p = Probability(p_correct).value();
  if (ell < 1) throw DomainError(fmt::format("ell < 1 (ell={})", ell));
  std::vector<bool> bits(static_cast<std::size_t>(ell - 1));
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = gen.bernoulli(p);
  return MatchSequence(std::move(bits));
}

/// Greedy left-to-right split: a run ends at each false bit.
inline RunDecomposition decompose_runs(const MatchSequence& matches) {
  RunDecomposition runs;
  std::int64_t current = 1;
  for (bool matched : matches.bits()) {
    if (matched) {
      ++current;
    } else {
      runs.run_lengths.push_back(current);
      current = 1;
    }
  }
  runs.run_lengths.push_back(current);
  return runs;
}

/// Sums T_X = d + (X-1) d_bar and C_X = (d_bar + k(d-d_bar)) X + (d-d_bar)
/// over the runs.
inline LatencyComputeReport cost_of_runs(const DecodingConfig& config,
                                         const RunDecomposition& runs) {
  validate_config(config, Regime::theorem);
  if (runs.total() != config.ell) {
    throw DomainError(fmt::format("run lengths sum to {} but ell = {}", runs.total(), config.ell));
  }
  const std::int64_t s = config.spec_depth();
  std::int64_t latency = 0;
  std::int64_t compute = 0;
  for (auto x : runs.run_lengths) {
    if (x < 1) throw DomainError("run length < 1");
    latency += config.d + (x - 1) * config.d_bar;
    compute += (config.d_bar + config.k * s) * x + s;
  }
  return LatencyComputeReport::from_totals(static_cast<double>(latency),
                                           static_cast<double>(compute), config.ell);
}

struct MonteCarloSummary {
  std::int64_t trials = 0;
  double mean_latency = 0.0;
  double mean_compute = 0.0;
  double mean_n_runs = 0.0;
  double stderr_latency = 0.0;
  double stderr_compute = 0.0;
  double stderr_n_runs = 0.0;
  std::uint64_t seed = 0;
  DecodingConfig config;

  friend bool operator==(const MonteCarloSummary&, const MonteCarloSummary&) = default;
};

/// Per-trial outcome; totals are integers in the layer-time model.
struct TrialOutcome {
  std::int64_t latency = 0;
  std::int64_t compute = 0;
  std::int64_t n_runs = 0;
};

/// Trial `index` of a seeded experiment. Independent of every other trial.
inline TrialOutcome run_trial(const DecodingConfig& config, std::uint64_t seed,
                              std::uint64_t index) {
  auto gen = rng::SplitMix64::stream(seed, index);
  const auto matches = sample_match_sequence(gen, config.p(), config.ell);
  const auto runs = decompose_runs(matches);
  const auto cost = cost_of_runs(config, runs);
  return {static_cast<std::int64_t>(cost.total_latency),
          static_cast<std::int64_t>(cost.total_compute), runs.n_runs()};
}

namespace detail {
struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Two-pass, fixed index order; unbiased (n-1) variance.
template <typename Proj>
MeanStderr mean_stderr(const std::vector<TrialOutcome>& xs, Proj proj) {
  const auto n = static_cast<double>(xs.size());
  long double sum = 0.0L;
  for (const auto& x : xs) sum += static_cast<long double>(proj(x));
  const double mean = static_cast<double>(sum / static_cast<long double>(xs.size()));
  if (xs.size() < 2) return {mean, 0.0};
  long double ss = 0.0L;
  for (const auto& x : xs) {
    const long double dev = static_cast<long double>(proj(x)) - mean;
    ss += dev * dev;
  }
  const double var = static_cast<double>(ss / static_cast<long double>(xs.size() - 1));
  return {mean, std::sqrt(var) / std::sqrt(n)};
}
}  // namespace detail

/// Runs `trials` seeded simulations of sample -> decompose -> cost. Results
/// are aggregated by trial index, so `threads` never changes the summary.
inline MonteCarloSummary monte_carlo(const DecodingConfig& config, std::int64_t trials,
                                     std::uint64_t seed, unsigned threads = 1) {
  validate_config(config, Regime::theorem);
  (void)config.p();
  if (trials < 1) throw DomainError(fmt::format("trials < 1 (trials={})", trials));

  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(trials));
  const auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) outcomes[i] = run_trial(config, seed, i);
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(trials)));
  if (threads == 1) {
    run_range(0, outcomes.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (outcomes.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(outcomes.size(), begin + chunk);
      if (begin < end) pool.emplace_back(run_range, begin, end);
    }
  }

  const auto lat = detail::mean_stderr(outcomes, [](const TrialOutcome& o) { return o.latency; });
  const auto cmp = detail::mean_stderr(outcomes, [](const TrialOutcome& o) { return o.compute; });
  const auto nr = detail::mean_stderr(outcomes, [](const TrialOutcome& o) { return o.n_runs; });
  return {trials, lat.mean, cmp.mean, nr.mean, lat.stderr_, cmp.stderr_, nr.stderr_, seed, config};
}

inline nlohmann::json to_json(const MonteCarloSummary& s) {
  return {{"config", config_to_json(s.config)},
          {"trials", s.trials},
          {"seed", s.seed},
          {"mean_latency", s.mean_latency},
          {"mean_compute", s.mean_compute},
          {"mean_n_runs", s.mean_n_runs},
          {"stderr_latency", s.stderr_latency},
          {"stderr_compute", s.stderr_compute},
          {"stderr_n_runs", s.stderr_n_runs}};
}

}  // namespace ppd::stochastic
