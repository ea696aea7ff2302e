#pragma once

// Match-rate estimation from per-token prediction logs.
//
// A trace is JSON Lines, one record per generated position:
//   {"example_id": str, "position": int, "early_topk": [int,...], "final": int, "layer": int?}
// A position counts as a match at cutoff k when `final` is among the first k
// entries of `early_topk`.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ppd/analytic.hpp"
#include "ppd/core_types.hpp"

namespace ppd::trace {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::int64_t line, const std::string& reason)
      : std::runtime_error(fmt::format("line {}: {}", line, reason)), line_(line) {}
  [[nodiscard]] std::int64_t line() const noexcept { return line_; }

 private:
  std::int64_t line_;
};

class DuplicateIdError : public ParseError {
 public:
  DuplicateIdError(std::int64_t line, std::int64_t token)
      : ParseError(line, fmt::format("duplicate token id {} in early_topk", token)), token_(token) {}
  [[nodiscard]] std::int64_t token() const noexcept { return token_; }

 private:
  std::int64_t token_;
};

struct TraceRecord {
  std::string example_id;
  std::int64_t position = 1;  // 1-based
  std::vector<std::int64_t> early_topk;
  std::int64_t final = 0;
  std::optional<std::int64_t> layer;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

/// True if `final` is among the first `k` early candidates.
inline bool matches_at(const TraceRecord& r, std::int64_t k) {
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(k), r.early_topk.size());
  return std::find(r.early_topk.begin(), r.early_topk.begin() + static_cast<std::ptrdiff_t>(n),
                   r.final) != r.early_topk.begin() + static_cast<std::ptrdiff_t>(n);
}

// ---------------------------------------------------------------------------
// JSONL I/O

inline nlohmann::json to_json(const TraceRecord& r) {
  nlohmann::json j = {{"example_id", r.example_id},
                      {"position", r.position},
                      {"early_topk", r.early_topk},
                      {"final", r.final}};
  if (r.layer) j["layer"] = *r.layer;
  return j;
}

/// Parses one record; `line` is only used for error reporting.
inline TraceRecord parse_record(const std::string& text, std::int64_t line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line, fmt::format("invalid JSON ({})", e.what()));
  }
  if (!j.is_object()) throw ParseError(line, "record is not a JSON object");
  const auto require = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw ParseError(line, fmt::format("missing \"{}\"", key));
    return j.at(key);
  };
  const auto as_int = [&](const nlohmann::json& v, const char* key) {
    if (!v.is_number_integer()) throw ParseError(line, fmt::format("\"{}\" is not an integer", key));
    return v.get<std::int64_t>();
  };

  TraceRecord r;
  const auto& id = require("example_id");
  if (!id.is_string()) throw ParseError(line, "\"example_id\" is not a string");
  r.example_id = id.get<std::string>();
  r.position = as_int(require("position"), "position");
  if (r.position < 1) throw ParseError(line, "\"position\" < 1");
  const auto& topk = require("early_topk");
  if (!topk.is_array()) throw ParseError(line, "\"early_topk\" is not an array");
  std::unordered_set<std::int64_t> seen;
  for (const auto& v : topk) {
    const auto t = as_int(v, "early_topk");
    if (!seen.insert(t).second) throw DuplicateIdError(line, t);
    r.early_topk.push_back(t);
  }
  r.final = as_int(require("final"), "final");
  if (j.contains("layer") && !j.at("layer").is_null()) r.layer = as_int(j.at("layer"), "layer");
  return r;
}

/// Reads records in stream order. Blank lines are skipped.
inline std::vector<TraceRecord> load_traces(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string text;
  std::int64_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_record(text, line));
  }
  return out;
}

inline void save_traces(std::ostream& out, std::span<const TraceRecord> records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Estimation

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

inline constexpr double kZ95 = 1.959963984540054;

/// Wilson score interval for `successes` out of `n`. Stays within [0,1] and
/// is non-degenerate at p_hat = 0 or 1.
inline Interval wilson_interval(std::int64_t successes, std::int64_t n, double z = kZ95) {
  if (n <= 0) return {0.0, 1.0};
  const auto nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct Bucket {
  std::int64_t first = 0;  // inclusive position range
  std::int64_t last = 0;
  std::int64_t count = 0;
  std::int64_t matches = 0;
  double p_hat = 0.0;
};

struct MatchRateReport {
  std::int64_t k = 0;
  std::int64_t total_positions = 0;
  std::int64_t matches = 0;
  double p_hat = 0.0;
  Interval ci95;
  std::vector<Bucket> buckets;
};

inline void check_cutoff(std::span<const TraceRecord> records, std::int64_t k) {
  if (k < 1) throw DomainError(fmt::format("k < 1 (k={})", k));
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (static_cast<std::int64_t>(records[i].early_topk.size()) < k) {
      throw DomainError(fmt::format("k={} exceeds early_topk length {} (record {})", k,
                                    records[i].early_topk.size(), i + 1));
    }
  }
}

inline MatchRateReport match_rate(std::span<const TraceRecord> records, std::int64_t k) {
  check_cutoff(records, k);
  MatchRateReport rep;
  rep.k = k;
  rep.total_positions = static_cast<std::int64_t>(records.size());
  for (const auto& r : records) rep.matches += matches_at(r, k) ? 1 : 0;
  rep.p_hat = rep.total_positions > 0
                  ? static_cast<double>(rep.matches) / static_cast<double>(rep.total_positions)
                  : 0.0;
  rep.ci95 = wilson_interval(rep.matches, rep.total_positions);
  return rep;
}

/// Overall report plus per-bucket rates over positions [1..w], [w+1..2w], ...
/// Buckets run up to the largest observed position; empty buckets are kept
/// with count 0.
inline MatchRateReport match_rate_by_bucket(std::span<const TraceRecord> records, std::int64_t k,
                                            std::int64_t bucket_width) {
  if (bucket_width < 1) throw DomainError(fmt::format("bucket_width < 1 ({})", bucket_width));
  auto rep = match_rate(records, k);
  std::int64_t max_pos = 0;
  for (const auto& r : records) max_pos = std::max(max_pos, r.position);
  const std::int64_t n_buckets = (max_pos + bucket_width - 1) / bucket_width;
  rep.buckets.resize(static_cast<std::size_t>(n_buckets));
  for (std::int64_t b = 0; b < n_buckets; ++b) {
    rep.buckets[static_cast<std::size_t>(b)].first = b * bucket_width + 1;
    rep.buckets[static_cast<std::size_t>(b)].last = (b + 1) * bucket_width;
  }
  for (const auto& r : records) {
    auto& b = rep.buckets[static_cast<std::size_t>((r.position - 1) / bucket_width)];
    ++b.count;
    b.matches += matches_at(r, k) ? 1 : 0;
  }
  for (auto& b : rep.buckets) {
    b.p_hat = b.count > 0 ? static_cast<double>(b.matches) / static_cast<double>(b.count) : 0.0;
  }
  return rep;
}

inline nlohmann::json to_json(const MatchRateReport& rep) {
  nlohmann::json j = {{"k", rep.k},
                      {"total_positions", rep.total_positions},
                      {"matches", rep.matches},
                      {"p_hat", rep.p_hat},
                      {"ci95", {rep.ci95.lo, rep.ci95.hi}}};
  if (!rep.buckets.empty()) {
    auto arr = nlohmann::json::array();
    for (const auto& b : rep.buckets) {
      arr.push_back({{"range", fmt::format("{}-{}", b.first, b.last)},
                     {"first", b.first},
                     {"last", b.last},
                     {"count", b.count},
                     {"matches", b.matches},
                     {"p_hat", b.p_hat}});
    }
    j["buckets"] = std::move(arr);
  }
  return j;
}

/// Bucket table laid out as columns: one per position range, then Total.
/// Rows: p_hat, matches, count.
inline std::string to_csv(const MatchRateReport& rep) {
  std::string header = "k,row";
  for (const auto& b : rep.buckets) header += fmt::format(",{}-{}", b.first, b.last);
  header += ",Total\n";
  std::string p_row = fmt::format("{},p_hat", rep.k);
  std::string m_row = fmt::format("{},matches", rep.k);
  std::string c_row = fmt::format("{},count", rep.k);
  for (const auto& b : rep.buckets) {
    p_row += fmt::format(",{}", b.p_hat);
    m_row += fmt::format(",{}", b.matches);
    c_row += fmt::format(",{}", b.count);
  }
  p_row += fmt::format(",{}\n", rep.p_hat);
  m_row += fmt::format(",{}\n", rep.matches);
  c_row += fmt::format(",{}\n", rep.total_positions);
  return header + p_row + m_row + c_row;
}

// ---------------------------------------------------------------------------
// Forecast

struct Forecast {
  MatchRateReport rate;
  DecodingConfig config;            // p_correct = p_hat
  LatencyComputeReport expected;    // exact finite-ell expectations at p_hat
  double latency_at_ci_lo = 0.0;    // expected latency at the lower p bound
  double latency_at_ci_hi = 0.0;    // ... and at the upper bound (<= the former)
  std::optional<double> latency_per_token_norm;   // halfdepth forms, only when 2*d_bar == d
  std::optional<double> compute_per_time_unit;
  std::optional<double> compute_per_token;
};

inline Forecast forecast_from_trace(std::span<const TraceRecord> records, std::int64_t k,
                                    std::int64_t d, std::int64_t d_bar, std::int64_t ell) {
  if (records.empty()) throw DomainError("forecast needs at least one trace record");
  Forecast f;
  f.rate = match_rate(records, k);
  f.config = validate_config(DecodingConfig{d, d_bar, k, ell, Probability(f.rate.p_hat)}, Regime::theorem);
  f.expected = analytic::expected_report(f.config);

  auto at = f.config;
  at.p_correct = Probability(f.rate.ci95.lo);
  f.latency_at_ci_lo = analytic::expected_latency(at);
  at.p_correct = Probability(f.rate.ci95.hi);
  f.latency_at_ci_hi = analytic::expected_latency(at);

  if (2 * d_bar == d) {
    f.latency_per_token_norm = analytic::per_token_latency_halfdepth(f.rate.p_hat, 1.0);
    f.compute_per_time_unit = analytic::avg_compute_per_time_unit_halfdepth(f.rate.p_hat, k);
    f.compute_per_token = analytic::avg_compute_per_token_halfdepth(f.rate.p_hat, k);
  }
  return f;
}

inline nlohmann::json to_json(const Forecast& f) {
  nlohmann::json j = {{"match_rate", to_json(f.rate)},
                      {"config", config_to_json(f.config)},
                      {"expected", ppd::to_json(f.expected)},
                      {"latency_range", {f.latency_at_ci_hi, f.latency_at_ci_lo}}};
  if (f.latency_per_token_norm) {
    j["halfdepth"] = {{"latency_per_token_norm", *f.latency_per_token_norm},
                      {"compute_per_time_unit", *f.compute_per_time_unit},
                      {"compute_per_token", *f.compute_per_token}};
  }
  return j;
}

}  // namespace ppd::trace
