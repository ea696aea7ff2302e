#pragma once

// Layer-time-unit reconstruction of the pipelined decoding schedule.
//
// Per output token the main process (pid 0) first computes its "head"
// layers up to d_bar: from layer 1 at the start of a run, or from layer
// d-d_bar+1 when it resumes from a handed-off sub-process state. Then the
// speculation window opens: main computes layers d_bar+1..d while each of
// the k sub-processes (pid 1..k) computes layers 1..d-d_bar of the next
// position for one early candidate. Both sides take d-d_bar units, so the
// window closes when main emits the token; the match check and handoff are
// free. Discarded speculative work still occupies its unit.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "ppd/core_types.hpp"

namespace ppd::sim {

inline constexpr std::int64_t kMainProcess = 0;

struct ScheduleEvent {
  std::int64_t process_id = 0;   // 0 = main, 1..k = sub-processes
  std::int64_t token_index = 0;  // 1-based output token whose forward pass this is
  std::int64_t layer_start = 0;  // inclusive
  std::int64_t layer_end = 0;    // inclusive
  std::int64_t t_start = 0;      // half-open [t_start, t_end)
  std::int64_t t_end = 0;
  bool discarded = false;

  [[nodiscard]] std::int64_t duration() const noexcept { return t_end - t_start; }
  friend bool operator==(const ScheduleEvent&, const ScheduleEvent&) = default;
};

struct ScheduleTimeline {
  std::vector<ScheduleEvent> events;
  std::int64_t makespan = 0;
  DecodingConfig config;
  MatchSequence matches;
};

/// Replays the schedule for `matches`. On a match, the kept speculative
/// state is attributed to sub-process 1 (the top-ranked candidate); which
/// candidate actually matched does not change any time or compute total.
/// Speculation is launched for the last token too, and its work is discarded.
inline ScheduleTimeline build_schedule(const DecodingConfig& config, const MatchSequence& matches) {
  validate_config(config, Regime::theorem);
  if (matches.ell() != config.ell) {
    throw DomainError(fmt::format("match sequence has {} bits but ell-1 = {}", matches.size(),
                                  config.ell - 1));
  }
  const std::int64_t d = config.d;
  const std::int64_t d_bar = config.d_bar;
  const std::int64_t s = config.spec_depth();

  ScheduleTimeline tl;
  tl.config = config;
  tl.matches = matches;
  tl.events.reserve(static_cast<std::size_t>(config.ell * (config.k + 2)));

  std::int64_t t = 0;
  for (std::int64_t tok = 1; tok <= config.ell; ++tok) {
    const bool resumed = tok > 1 && matches[static_cast<std::size_t>(tok - 2)];
    const std::int64_t head_first = resumed ? s + 1 : 1;
    if (head_first <= d_bar) {
      const std::int64_t len = d_bar - head_first + 1;
      tl.events.push_back({kMainProcess, tok, head_first, d_bar, t, t + len, false});
      t += len;
    }
    if (s > 0) {
      const bool next_matches = tok < config.ell && matches[static_cast<std::size_t>(tok - 1)];
      tl.events.push_back({kMainProcess, tok, d_bar + 1, d, t, t + s, false});
      for (std::int64_t pid = 1; pid <= config.k; ++pid) {
        const bool kept = next_matches && pid == 1;
        tl.events.push_back({pid, tok + 1, 1, s, t, t + s, !kept});
      }
      t += s;
    }
  }
  tl.makespan = t;
  return tl;
}

/// Busy-process count per time unit, discarded work included.
inline std::vector<std::int64_t> occupancy_profile(const ScheduleTimeline& tl) {
  std::vector<std::int64_t> delta(static_cast<std::size_t>(tl.makespan) + 1, 0);
  for (const auto& e : tl.events) {
    ++delta[static_cast<std::size_t>(e.t_start)];
    --delta[static_cast<std::size_t>(e.t_end)];
  }
  std::vector<std::int64_t> profile(static_cast<std::size_t>(tl.makespan));
  std::int64_t running = 0;
  for (std::size_t t = 0; t < profile.size(); ++t) {
    running += delta[t];
    profile[t] = running;
  }
  return profile;
}

struct IdentityReport {
  std::int64_t n_runs = 0;
  std::int64_t expected_latency = 0;   // d_bar*ell + (d-d_bar)*N
  std::int64_t makespan = 0;
  std::int64_t expected_compute = 0;   // (d_bar + k(d-d_bar))*ell + (d-d_bar)*N
  std::int64_t occupancy_sum = 0;
  std::int64_t overlap_units = 0;      // units where one process runs >1 event
  std::int64_t main_idle_units = 0;
  std::int64_t causality_violations = 0;
  std::int64_t peak_occupancy = 0;
  std::int64_t capacity_violations = 0;  // units with more than k+1 busy

  [[nodiscard]] std::int64_t latency_residual() const noexcept { return makespan - expected_latency; }
  [[nodiscard]] std::int64_t compute_residual() const noexcept { return occupancy_sum - expected_compute; }

  [[nodiscard]] bool ok() const noexcept {
    return latency_residual() == 0 && compute_residual() == 0 && overlap_units == 0 &&
           main_idle_units == 0 && causality_violations == 0 && capacity_violations == 0;
  }
};

/// Checks the timeline against the closed-form totals and structural rules.
/// Failures are reported through the residuals, never thrown.
inline IdentityReport verify_identities(const ScheduleTimeline& tl) {
  const auto& c = tl.config;
  const std::int64_t s = c.spec_depth();
  IdentityReport r;
  r.n_runs = 1 + tl.matches.failures();
  r.expected_latency = c.d_bar * c.ell + s * r.n_runs;
  r.expected_compute = (c.d_bar + c.k * s) * c.ell + s * r.n_runs;

  std::int64_t max_end = 0;
  for (const auto& e : tl.events) max_end = std::max(max_end, e.t_end);
  r.makespan = max_end;

  const auto profile = occupancy_profile(tl);
  for (auto busy : profile) {
    r.occupancy_sum += busy;
    r.peak_occupancy = std::max(r.peak_occupancy, busy);
    if (busy > c.k + 1) ++r.capacity_violations;
  }

  // Per-process coverage counts.
  const auto units = static_cast<std::size_t>(std::max<std::int64_t>(tl.makespan, max_end));
  std::vector<std::vector<std::int32_t>> cover(static_cast<std::size_t>(c.k + 1),
                                               std::vector<std::int32_t>(units, 0));
  for (const auto& e : tl.events) {
    if (e.process_id < 0 || e.process_id > c.k) {
      ++r.capacity_violations;
      continue;
    }
    auto& row = cover[static_cast<std::size_t>(e.process_id)];
    for (auto t = e.t_start; t < e.t_end; ++t) ++row[static_cast<std::size_t>(t)];
  }
  for (const auto& row : cover) {
    for (auto n : row) r.overlap_units += n > 1 ? 1 : 0;
  }
  for (auto n : cover[kMainProcess]) r.main_idle_units += n == 0 ? 1 : 0;

  // The first main event of each token must start at layer 1 after a
  // failure and at layer d-d_bar+1 after a match; in the latter case a kept
  // sub event for that token must have finished by then.
  std::vector<std::int64_t> kept_end(static_cast<std::size_t>(c.ell + 2), -1);
  for (const auto& e : tl.events) {
    if (e.process_id != kMainProcess && !e.discarded && e.layer_end == s &&
        e.token_index >= 1 && e.token_index <= c.ell + 1) {
      kept_end[static_cast<std::size_t>(e.token_index)] = e.t_end;
    }
  }
  std::int64_t last_token = 0;
  for (const auto& e : tl.events) {
    if (e.process_id != kMainProcess || e.token_index == last_token) continue;
    last_token = e.token_index;
    const bool resumed =
        e.token_index > 1 && tl.matches[static_cast<std::size_t>(e.token_index - 2)];
    if (!resumed) {
      if (e.layer_start != 1) ++r.causality_violations;
      continue;
    }
    if (e.layer_start != s + 1) ++r.causality_violations;
    if (s > 0 && c.k > 0) {
      const auto produced = kept_end[static_cast<std::size_t>(e.token_index)];
      if (produced < 0 || produced > e.t_start) ++r.causality_violations;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Exports

inline constexpr std::string_view kEventCsvHeader =
    "process_id,token_index,layer_start,layer_end,t_start,t_end,discarded";

inline std::string timeline_to_csv(const ScheduleTimeline& tl) {
  std::string out(kEventCsvHeader);
  out += '\n';
  for (const auto& e : tl.events) {
    out += fmt::format("{},{},{},{},{},{},{}\n", e.process_id, e.token_index, e.layer_start,
                       e.layer_end, e.t_start, e.t_end, e.discarded ? 1 : 0);
  }
  return out;
}

/// One row per process, one character per time unit:
/// '#' main work, '+' kept speculation, 'x' discarded speculation, '.' idle.
inline std::string timeline_to_text(const ScheduleTimeline& tl) {
  const auto width = static_cast<std::size_t>(tl.makespan);
  std::vector<std::string> rows(static_cast<std::size_t>(tl.config.k + 1), std::string(width, '.'));
  for (const auto& e : tl.events) {
    const char glyph = e.process_id == kMainProcess ? '#' : (e.discarded ? 'x' : '+');
    auto& row = rows[static_cast<std::size_t>(e.process_id)];
    for (auto t = e.t_start; t < e.t_end; ++t) row[static_cast<std::size_t>(t)] = glyph;
  }
  std::string out;
  const int label_width = static_cast<int>(fmt::formatted_size("P{}", tl.config.k));
  for (std::size_t pid = 0; pid < rows.size(); ++pid) {
    out += fmt::format("{:<{}} |{}|\n", fmt::format("P{}", pid), label_width, rows[pid]);
  }
  out += fmt::format("makespan={}\n", tl.makespan);
  return out;
}

inline std::string timeline_to_svg(const ScheduleTimeline& tl) {
  constexpr double kLabel = 40.0;
  constexpr double kRow = 22.0;
  constexpr double kPad = 10.0;
  const double unit = tl.makespan > 0 ? std::clamp(800.0 / static_cast<double>(tl.makespan), 1.0, 12.0) : 1.0;
  const double width = kLabel + unit * static_cast<double>(tl.makespan) + 2 * kPad;
  const double height = kRow * static_cast<double>(tl.config.k + 1) + 2 * kPad + 20.0;

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "font-family=\"monospace\" font-size=\"11\">\n",
      width, height);
  for (std::int64_t pid = 0; pid <= tl.config.k; ++pid) {
    out += fmt::format("<text x=\"{}\" y=\"{:.1f}\">P{}</text>\n", kPad,
                       kPad + kRow * static_cast<double>(pid) + 15.0, pid);
  }
  for (const auto& e : tl.events) {
    const char* fill = e.process_id == kMainProcess ? "#3b6ea8" : (e.discarded ? "#cccccc" : "#e08a2c");
    out += fmt::format(
        "<rect x=\"{:.2f}\" y=\"{:.1f}\" width=\"{:.2f}\" height=\"{:.1f}\" fill=\"{}\" "
        "stroke=\"#222\" stroke-width=\"0.5\"><title>P{} tok {} L{}-{} [{},{})</title></rect>\n",
        kLabel + kPad + unit * static_cast<double>(e.t_start),
        kPad + kRow * static_cast<double>(e.process_id) + 2.0, unit * static_cast<double>(e.duration()),
        kRow - 4.0, fill, e.process_id, e.token_index, e.layer_start, e.layer_end, e.t_start,
        e.t_end);
  }
  out += fmt::format("<text x=\"{}\" y=\"{:.1f}\">makespan = {} time units</text>\n", kLabel + kPad,
                     height - kPad, tl.makespan);
  out += "</svg>\n";
  return out;
}

}  // namespace ppd::sim
