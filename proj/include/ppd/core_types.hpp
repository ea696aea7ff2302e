#pragma once

// Shared domain types for pipelined early-prediction decoding.
//
// Units: one "time unit" is the cost of a single transformer layer forward.
// A full forward pass costs d time units.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace ppd {

/// Raised when an input violates a documented domain constraint. The message
/// names the violated constraint, e.g. "d_bar < d/2".
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A probability in the closed interval [0, 1].
class Probability {
 public:
  constexpr Probability() = default;
  explicit Probability(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw DomainError(fmt::format("p_correct outside [0,1]: {}", value));
    }
  }
  [[nodiscard]] constexpr double value() const noexcept { return value_; }
  friend constexpr bool operator==(Probability, Probability) = default;

 private:
  double value_ = 0.0;
};

/// (d, d_bar, k, ell, p_correct). p_correct is absent for trace-driven runs.
struct DecodingConfig {
  std::int64_t d = 1;      // layers per full forward pass
  std::int64_t d_bar = 1;  // early-prediction layer
  std::int64_t k = 0;      // speculative sub-processes
  std::int64_t ell = 1;    // tokens to generate
  std::optional<Probability> p_correct;

  /// Layers a sub-process pre-computes for the next position.
  [[nodiscard]] constexpr std::int64_t spec_depth() const noexcept { return d - d_bar; }

  [[nodiscard]] double p() const {
    if (!p_correct) throw DomainError("p_correct is required but absent");
    return p_correct->value();
  }

  friend bool operator==(const DecodingConfig&, const DecodingConfig&) = default;
};

enum class Regime {
  any,      // 1 <= d_bar <= d
  theorem,  // additionally 2*d_bar >= d
};

/// Returns `config` unchanged if every invariant holds, otherwise throws
/// DomainError naming the first violated constraint.
inline const DecodingConfig& validate_config(const DecodingConfig& config, Regime regime) {
  if (config.d < 1) throw DomainError(fmt::format("d < 1 (d={})", config.d));
  if (config.d_bar < 1) throw DomainError(fmt::format("d_bar < 1 (d_bar={})", config.d_bar));
  if (config.d_bar > config.d) {
    throw DomainError(fmt::format("d_bar > d (d_bar={}, d={})", config.d_bar, config.d));
  }
  if (config.k < 0) throw DomainError(fmt::format("k < 0 (k={})", config.k));
  if (config.ell < 1) throw DomainError(fmt::format("ell < 1 (ell={})", config.ell));
  if (regime == Regime::theorem && 2 * config.d_bar < config.d) {
    throw DomainError(fmt::format("d_bar < d/2 (d_bar={}, d={})", config.d_bar, config.d));
  }
  return config;
}

/// Per-position early-prediction outcomes. Bit t is true iff the early top-k
/// candidates for output token t+1 contained the final-layer token. A
/// sequence for ell tokens has exactly ell-1 bits.
class MatchSequence {
 public:
  MatchSequence() = default;
  explicit MatchSequence(std::vector<bool> bits) : bits_(std::move(bits)) {}

  /// Parses "TTFT..." (case-insensitive T/F, also 1/0).
  static MatchSequence parse(std::string_view text) {
    std::vector<bool> bits;
    bits.reserve(text.size());
    for (char c : text) {
      switch (c) {
        case 'T': case 't': case '1': bits.push_back(true); break;
        case 'F': case 'f': case '0': bits.push_back(false); break;
        default: throw DomainError(fmt::format("invalid match character '{}'", c));
      }
    }
    return MatchSequence(std::move(bits));
  }

  [[nodiscard]] std::string to_string() const {
    std::string out;
    out.reserve(bits_.size());
    for (bool b : bits_) out.push_back(b ? 'T' : 'F');
    return out;
  }

  [[nodiscard]] std::size_t size() const noexcept { return bits_.size(); }
  [[nodiscard]] bool empty() const noexcept { return bits_.empty(); }
  [[nodiscard]] bool operator[](std::size_t i) const { return bits_[i]; }
  [[nodiscard]] const std::vector<bool>& bits() const noexcept { return bits_; }

  /// Number of tokens this sequence describes.
  [[nodiscard]] std::int64_t ell() const noexcept { return static_cast<std::int64_t>(bits_.size()) + 1; }

  [[nodiscard]] std::int64_t failures() const noexcept {
    std::int64_t n = 0;
    for (bool b : bits_) n += b ? 0 : 1;
    return n;
  }

  friend bool operator==(const MatchSequence&, const MatchSequence&) = default;

 private:
  std::vector<bool> bits_;
};

/// Run lengths X_1..X_N. A run is a maximal streak of tokens generated
/// without an early-prediction failure; sum(X_i) = ell.
struct RunDecomposition {
  std::vector<std::int64_t> run_lengths;

  [[nodiscard]] std::int64_t n_runs() const noexcept {
    return static_cast<std::int64_t>(run_lengths.size());
  }
  [[nodiscard]] std::int64_t total() const noexcept {
    std::int64_t s = 0;
    for (auto x : run_lengths) s += x;
    return s;
  }

  friend bool operator==(const RunDecomposition&, const RunDecomposition&) = default;
};

/// Inverse of decompose_runs: each run of length X contributes X-1 true bits
/// followed by a false bit, except the last run which has no terminator.
inline MatchSequence to_match_sequence(const RunDecomposition& runs) {
  std::vector<bool> bits;
  for (std::size_t i = 0; i < runs.run_lengths.size(); ++i) {
    const auto x = runs.run_lengths[i];
    if (x < 1) throw DomainError(fmt::format("run length < 1 at run {}", i + 1));
    bits.insert(bits.end(), static_cast<std::size_t>(x - 1), true);
    if (i + 1 < runs.run_lengths.size()) bits.push_back(false);
  }
  return MatchSequence(std::move(bits));
}

struct LatencyComputeReport {
  double total_latency = 0.0;   // time units
  double total_compute = 0.0;   // compute-unit * time-units
  double per_token_latency = 0.0;
  double avg_compute_per_time_unit = 0.0;
  double avg_compute_per_token = 0.0;

  static LatencyComputeReport from_totals(double latency, double compute, std::int64_t ell) {
    const auto n = static_cast<double>(ell);
    return {latency, compute, latency / n, compute / latency, compute / n};
  }
};

inline nlohmann::json config_to_json(const DecodingConfig& c) {
  nlohmann::json j = {{"d", c.d}, {"d_bar", c.d_bar}, {"k", c.k}, {"ell", c.ell}};
  j["p_correct"] = c.p_correct ? nlohmann::json(c.p_correct->value()) : nlohmann::json(nullptr);
  return j;
}

/// Reads {"d", "d_bar", "k", "ell", "p_correct"}; missing keys keep the
/// values already in `base`.
inline DecodingConfig config_from_json(const nlohmann::json& j, DecodingConfig base = {}) {
  if (!j.is_object()) throw DomainError("config JSON must be an object");
  if (j.contains("d")) base.d = j.at("d").get<std::int64_t>();
  if (j.contains("d_bar")) base.d_bar = j.at("d_bar").get<std::int64_t>();
  if (j.contains("k")) base.k = j.at("k").get<std::int64_t>();
  if (j.contains("ell")) base.ell = j.at("ell").get<std::int64_t>();
  if (j.contains("p_correct")) {
    const auto& p = j.at("p_correct");
    base.p_correct = p.is_null() ? std::nullopt : std::optional(Probability(p.get<double>()));
  }
  return base;
}

inline nlohmann::json to_json(const LatencyComputeReport& r) {
  return {{"total_latency", r.total_latency},
          {"total_compute", r.total_compute},
          {"per_token_latency", r.per_token_latency},
          {"avg_compute_per_time_unit", r.avg_compute_per_time_unit},
          {"avg_compute_per_token", r.avg_compute_per_token}};
}

}  // namespace ppd
