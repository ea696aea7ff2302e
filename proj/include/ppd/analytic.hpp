#pragma once

// Closed-form latency / compute accounting.
//
// Two families live here:
//  * the exact finite-ell expectations (valid whenever 2*d_bar >= d), and
//  * the ell -> infinity "halfdepth" approximations for d_bar = d/2, kept as
//    separate functions because they are approximations, not special cases.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ppd/core_types.hpp"

namespace ppd::analytic {

namespace detail {
inline double checked_p(double p) { return Probability(p).value(); }
inline void check_k(std::int64_t k) {
  if (k < 0) throw DomainError(fmt::format("k < 0 (k={})", k));
}
}  // namespace detail

/// d * (1 - p/2). Pass d = 1 for the latency normalized by sequential decoding.
inline double per_token_latency_halfdepth(double p_correct, double d = 1.0) {
  const double p = detail::checked_p(p_correct);
  if (!(d >= 1.0)) throw DomainError(fmt::format("d < 1 (d={})", d));
  return d * (1.0 - p / 2.0);
}

/// (k + 2 - p) / (2 - p).
inline double avg_compute_per_time_unit_halfdepth(double p_correct, std::int64_t k) {
  const double p = detail::checked_p(p_correct);
  detail::check_k(k);
  return (static_cast<double>(k) + 2.0 - p) / (2.0 - p);
}

/// (2 + k - p) / 2, normalized by d.
inline double avg_compute_per_token_halfdepth(double p_correct, std::int64_t k) {
  const double p = detail::checked_p(p_correct);
  detail::check_k(k);
  return (2.0 + static_cast<double>(k) - p) / 2.0;
}

/// E[latency] = d*ell - (d - d_bar)(ell - 1) p.
inline double expected_latency(const DecodingConfig& config) {
  validate_config(config, Regime::theorem);
  const double p = config.p();
  const auto d = static_cast<double>(config.d);
  const auto s = static_cast<double>(config.spec_depth());
  const auto ell = static_cast<double>(config.ell);
  return d * ell - s * (ell - 1.0) * p;
}

/// E[compute] = E[latency] + k (d - d_bar) ell.
inline double expected_total_compute(const DecodingConfig& config) {
  const double latency = expected_latency(config);
  return latency + static_cast<double>(config.k * config.spec_depth() * config.ell);
}

/// Both expectations folded into a report.
inline LatencyComputeReport expected_report(const DecodingConfig& config) {
  return LatencyComputeReport::from_totals(expected_latency(config),
                                           expected_total_compute(config), config.ell);
}

/// E[N] = ell - (ell - 1) p.
inline double expected_run_count(std::int64_t ell, double p_correct) {
  const double p = detail::checked_p(p_correct);
  const auto n = static_cast<double>(ell);
  return n - (n - 1.0) * p;
}

/// The ell -> infinity limits of the exact expectations for arbitrary
/// d_bar in the theorem regime. With r = (d - d_bar)/d:
///   latency/token (normalized)  = 1 - r p
///   compute per time unit       = (1 - r p + k r) / (1 - r p)
/// At d_bar = d/2 these coincide with the halfdepth functions.
struct AsymptoticRates {
  double latency_per_token_norm = 0.0;
  double compute_per_time_unit = 0.0;
  double compute_per_token = 0.0;
};

inline AsymptoticRates asymptotic_rates(std::int64_t d, std::int64_t d_bar, std::int64_t k,
                                        double p_correct) {
  validate_config(DecodingConfig{d, d_bar, k, 1, Probability(p_correct)}, Regime::theorem);
  const double p = p_correct;
  const double r = static_cast<double>(d - d_bar) / static_cast<double>(d);
  const double latency = 1.0 - r * p;
  const double compute = latency + static_cast<double>(k) * r;
  return {latency, compute / latency, compute};
}

struct CurveRow {
  std::int64_t k = 0;
  double p_correct = 0.0;
  double latency_per_token_norm = 0.0;
  double compute_per_time_unit = 0.0;
  double compute_per_token = 0.0;
};

/// One row per (k, p), ordered by k then p. Any invalid combination aborts
/// the whole sweep; p outside [0,1] is rejected, never clamped.
inline std::vector<CurveRow> tradeoff_sweep(std::int64_t d, std::int64_t d_bar, std::int64_t ell,
                                            std::span<const std::int64_t> k_values,
                                            std::span<const double> p_values) {
  std::vector<CurveRow> rows;
  rows.reserve(k_values.size() * p_values.size());
  for (auto k : k_values) {
    for (double p : p_values) {
      validate_config(DecodingConfig{d, d_bar, k, ell, Probability(p)}, Regime::theorem);
      const auto rates = asymptotic_rates(d, d_bar, k, p);
      rows.push_back({k, p, rates.latency_per_token_norm, rates.compute_per_time_unit,
                      rates.compute_per_token});
    }
  }
  return rows;
}

inline constexpr std::string_view kCurveCsvHeader =
    "k,p_correct,latency_per_token_norm,compute_per_time_unit,compute_per_token";

inline std::string curve_to_csv(std::span<const CurveRow> rows) {
  std::string out(kCurveCsvHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.k, r.p_correct, r.latency_per_token_norm,
                       r.compute_per_time_unit, r.compute_per_token);
  }
  return out;
}

inline nlohmann::json curve_to_json(std::span<const CurveRow> rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"k", r.k},
                   {"p_correct", r.p_correct},
                   {"latency_per_token_norm", r.latency_per_token_norm},
                   {"compute_per_time_unit", r.compute_per_time_unit},
                   {"compute_per_token", r.compute_per_token}});
  }
  return arr;
}

}  // namespace ppd::analytic
