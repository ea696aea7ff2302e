// ppd: command-line front end for the pipelined-decoding toolkit.
//
// Exit codes: 0 success, 1 property/identity failure, 2 usage or validation error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "curve_svg.hpp"
#include "ppd/ppd.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

using ppd::DecodingConfig;
using ppd::DomainError;

// Config assembled from --config FILE and then individual flag overrides.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::int64_t> d, d_bar, k, ell;
  std::optional<double> p;

  void add_to(CLI::App* cmd, bool with_p, bool with_k = true) {
    cmd->add_option("--config", config_path, "JSON file with d, d_bar, k, ell, p_correct");
    cmd->add_option("--d", d, "layer count");
    cmd->add_option("--dbar", d_bar, "early-prediction layer");
    if (with_k) cmd->add_option("--k", k, "speculative sub-processes");
    cmd->add_option("--l", ell, "tokens to generate");
    if (with_p) cmd->add_option("--p", p, "match probability p_correct");
  }

  [[nodiscard]] DecodingConfig resolve() const {
    DecodingConfig c{};
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw DomainError(fmt::format("cannot open config file {}", config_path));
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw DomainError(fmt::format("invalid config file {}: {}", config_path, e.what()));
      }
      c = ppd::config_from_json(j, c);
    }
    if (d) c.d = *d;
    if (d_bar) c.d_bar = *d_bar;
    if (k) c.k = *k;
    if (ell) c.ell = *ell;
    if (p) c.p_correct = ppd::Probability(*p);
    return c;
  }
};

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError(fmt::format("cannot write {}", path));
  out << content;
}

std::vector<double> p_grid(double from, double to, int steps) {
  if (steps < 1) throw DomainError("--p-steps must be >= 1");
  std::vector<double> ps;
  if (steps == 1) return {from};
  for (int i = 0; i < steps; ++i) ps.push_back(from + (to - from) * i / (steps - 1));
  return ps;
}

// ---------------------------------------------------------------------------

int cmd_analyze(const ConfigFlags& flags, const std::string& format) {
  const auto c = flags.resolve();
  ppd::validate_config(c, ppd::Regime::theorem);
  const auto rep = ppd::analytic::expected_report(c);
  const bool halfdepth = 2 * c.d_bar == c.d;

  if (format == "csv") {
    std::cout << "d,d_bar,k,ell,p_correct,expected_latency,expected_total_compute,per_token_latency,"
                 "avg_compute_per_time_unit,avg_compute_per_token,latency_per_token_norm,"
                 "compute_per_time_unit,compute_per_token\n";
    std::cout << fmt::format("{},{},{},{},{},{},{},{},{},{}", c.d, c.d_bar, c.k, c.ell, c.p(),
                             rep.total_latency, rep.total_compute, rep.per_token_latency,
                             rep.avg_compute_per_time_unit, rep.avg_compute_per_token);
    if (halfdepth) {
      std::cout << fmt::format(",{},{},{}\n", ppd::analytic::per_token_latency_halfdepth(c.p(), 1.0),
                               ppd::analytic::avg_compute_per_time_unit_halfdepth(c.p(), c.k),
                               ppd::analytic::avg_compute_per_token_halfdepth(c.p(), c.k));
    } else {
      std::cout << ",,,\n";
    }
    return kExitOk;
  }

  nlohmann::json j = {{"config", ppd::config_to_json(c)},
                      {"expected_latency", rep.total_latency},
                      {"expected_total_compute", rep.total_compute},
                      {"per_token_latency", rep.per_token_latency},
                      {"avg_compute_per_time_unit", rep.avg_compute_per_time_unit},
                      {"avg_compute_per_token", rep.avg_compute_per_token},
                      {"expected_n_runs", ppd::analytic::expected_run_count(c.ell, c.p())}};
  if (halfdepth) {
    j["halfdepth"] = {{"latency_per_token_norm", ppd::analytic::per_token_latency_halfdepth(c.p(), 1.0)},
                      {"compute_per_time_unit", ppd::analytic::avg_compute_per_time_unit_halfdepth(c.p(), c.k)},
                      {"compute_per_token", ppd::analytic::avg_compute_per_token_halfdepth(c.p(), c.k)}};
  }
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

struct SweepFlags {
  std::vector<std::int64_t> k_list;
  std::vector<double> p_list;
  std::optional<double> p_from, p_to;
  int p_steps = 11;
  std::string out_csv;
  std::string out_svg;
  std::string x_axis = "time";
};

int cmd_sweep(const ConfigFlags& flags, const SweepFlags& sw) {
  const auto c = flags.resolve();
  std::vector<double> ps = sw.p_list;
  if (ps.empty()) {
    if (!sw.p_from || !sw.p_to) throw DomainError("give --p-list or both --p-from and --p-to");
    ps = p_grid(*sw.p_from, *sw.p_to, sw.p_steps);
  }
  const auto rows = ppd::analytic::tradeoff_sweep(c.d, c.d_bar, c.ell, sw.k_list, ps);
  write_output(sw.out_csv, ppd::analytic::curve_to_csv(rows));
  if (!sw.out_svg.empty()) {
    const auto axis = sw.x_axis == "token" ? ppd::tools::CurveAxis::compute_per_token
                                           : ppd::tools::CurveAxis::compute_per_time_unit;
    write_output(sw.out_svg, ppd::tools::curve_to_svg(rows, axis));
  }
  return kExitOk;
}

int cmd_simulate(const ConfigFlags& flags, std::int64_t trials, std::uint64_t seed, unsigned threads) {
  const auto c = flags.resolve();
  const auto summary = ppd::stochastic::monte_carlo(c, trials, seed, threads);
  std::cout << ppd::stochastic::to_json(summary).dump(2) << '\n';
  return kExitOk;
}

nlohmann::json identity_json(const ppd::sim::IdentityReport& r) {
  return {{"ok", r.ok()},
          {"n_runs", r.n_runs},
          {"makespan", r.makespan},
          {"expected_latency", r.expected_latency},
          {"latency_residual", r.latency_residual()},
          {"occupancy_sum", r.occupancy_sum},
          {"expected_compute", r.expected_compute},
          {"compute_residual", r.compute_residual()},
          {"overlap_units", r.overlap_units},
          {"main_idle_units", r.main_idle_units},
          {"causality_violations", r.causality_violations},
          {"capacity_violations", r.capacity_violations},
          {"peak_occupancy", r.peak_occupancy}};
}

int cmd_schedule(const ConfigFlags& flags, const std::optional<std::string>& matches_text,
                 std::uint64_t seed, const std::string& gantt, const std::string& out) {
  auto c = flags.resolve();
  ppd::validate_config(c, ppd::Regime::theorem);
  ppd::MatchSequence matches;
  if (matches_text) {
    matches = ppd::MatchSequence::parse(*matches_text);
    if (!flags.ell && flags.config_path.empty()) c.ell = matches.ell();
    if (matches.ell() != c.ell) {
      throw DomainError(fmt::format("--matches has {} bits but l-1 = {}", matches.size(), c.ell - 1));
    }
  } else {
    auto gen = ppd::rng::SplitMix64(seed);
    matches = ppd::stochastic::sample_match_sequence(gen, c.p(), c.ell);
  }

  const auto tl = ppd::sim::build_schedule(c, matches);
  std::string artifact;
  if (gantt == "csv") {
    artifact = ppd::sim::timeline_to_csv(tl);
  } else if (gantt == "svg") {
    artifact = ppd::sim::timeline_to_svg(tl);
  } else {
    artifact = ppd::sim::timeline_to_text(tl);
  }
  const auto rep = ppd::sim::verify_identities(tl);
  auto report = identity_json(rep);
  report["matches"] = matches.to_string();
  report["config"] = ppd::config_to_json(c);

  if (out.empty() || out == "-") {
    std::cout << artifact;
    std::cerr << report.dump() << '\n';
  } else {
    write_output(out, artifact);
    std::cout << report.dump(2) << '\n';
  }
  return rep.ok() ? kExitOk : kExitFailure;
}

int cmd_matchrate(const std::string& input, std::int64_t k, std::optional<std::int64_t> bucket,
                  const std::string& format, const ConfigFlags& forecast_flags) {
  std::vector<ppd::trace::TraceRecord> records;
  if (input == "-") {
    records = ppd::trace::load_traces(std::cin);
  } else {
    std::ifstream in(input);
    if (!in) throw DomainError(fmt::format("cannot open {}", input));
    records = ppd::trace::load_traces(in);
  }
  const auto rep = bucket ? ppd::trace::match_rate_by_bucket(records, k, *bucket)
                          : ppd::trace::match_rate(records, k);
  if (format == "csv") {
    std::cout << ppd::trace::to_csv(rep);
    return kExitOk;
  }
  nlohmann::json j = ppd::trace::to_json(rep);
  if (forecast_flags.d && forecast_flags.d_bar && forecast_flags.ell) {
    const auto f = ppd::trace::forecast_from_trace(records, k, *forecast_flags.d, *forecast_flags.d_bar,
                                                   *forecast_flags.ell);
    j["forecast"] = ppd::trace::to_json(f);
  }
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_verify(const ppd::mock::ExactnessOptions& opt) {
  if (opt.instances < 1) throw DomainError("--instances must be >= 1");
  const auto summary = ppd::mock::run_exactness_suite(opt);
  auto j = ppd::mock::to_json(summary);
  j["seed"] = opt.seed;
  j["ok"] = summary.ok();
  std::cout << j.dump(2) << '\n';
  return summary.ok() ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pipelined early-prediction decoding: latency/compute analysis and simulation"};
  app.require_subcommand(1);

  // analyze
  ConfigFlags analyze_cfg;
  std::string analyze_format = "json";
  auto* analyze = app.add_subcommand("analyze", "expected latency and compute for one configuration");
  analyze_cfg.add_to(analyze, true);
  analyze->add_option("--format", analyze_format)->check(CLI::IsMember({"json", "csv"}));

  // sweep
  ConfigFlags sweep_cfg;
  SweepFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "trade-off curve table and optional SVG plot");
  sweep_cfg.add_to(sweep, false, false);
  sweep->add_option("--k-list", sweep_flags.k_list, "k values, comma separated")->delimiter(',')->required();
  sweep->add_option("--p-list", sweep_flags.p_list, "p values, comma separated")->delimiter(',');
  sweep->add_option("--p-from", sweep_flags.p_from);
  sweep->add_option("--p-to", sweep_flags.p_to);
  sweep->add_option("--p-steps", sweep_flags.p_steps);
  sweep->add_option("--out", sweep_flags.out_csv, "CSV output path (default stdout)");
  sweep->add_option("--svg", sweep_flags.out_svg, "SVG plot output path");
  sweep->add_option("--x-axis", sweep_flags.x_axis, "plot x axis: time (compute per time unit) or token")
      ->check(CLI::IsMember({"time", "token"}));

  // simulate
  ConfigFlags sim_cfg;
  std::int64_t trials = 100000;
  std::uint64_t sim_seed = 0;
  unsigned threads = 1;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo estimate of latency and compute");
  sim_cfg.add_to(simulate, true);
  simulate->add_option("--trials", trials);
  simulate->add_option("--seed", sim_seed);
  simulate->add_option("--threads", threads, "worker threads (output does not depend on this)");

  // schedule
  ConfigFlags sched_cfg;
  std::optional<std::string> matches_text;
  std::uint64_t sched_seed = 0;
  std::string gantt = "text";
  std::string sched_out;
  auto* schedule = app.add_subcommand("schedule", "build and verify the pipelined schedule");
  sched_cfg.add_to(schedule, true);
  schedule->add_option("--matches", matches_text, "match outcomes, e.g. TTFT (length l-1)");
  schedule->add_option("--seed", sched_seed, "seed for sampling matches from --p");
  schedule->add_option("--gantt", gantt)->check(CLI::IsMember({"text", "csv", "svg"}));
  schedule->add_option("--out", sched_out, "artifact path; the verification report then goes to stdout");

  // matchrate
  std::string mr_input;
  std::int64_t mr_k = 1;
  std::optional<std::int64_t> mr_bucket;
  std::string mr_format = "json";
  ConfigFlags mr_cfg;
  auto* matchrate = app.add_subcommand("matchrate", "match rate estimate from a JSONL trace");
  matchrate->add_option("--input", mr_input, "trace JSONL path or - for stdin")->required();
  matchrate->add_option("--k", mr_k);
  matchrate->add_option("--bucket", mr_bucket, "position bucket width");
  matchrate->add_option("--format", mr_format)->check(CLI::IsMember({"json", "csv"}));
  matchrate->add_option("--d", mr_cfg.d, "with --dbar and --l: add a latency forecast");
  matchrate->add_option("--dbar", mr_cfg.d_bar);
  matchrate->add_option("--l", mr_cfg.ell);

  // verify
  ppd::mock::ExactnessOptions vopt;
  auto* verify = app.add_subcommand("verify", "exactness property suite on the mock model");
  verify->add_option("--instances", vopt.instances);
  verify->add_option("--seed", vopt.seed);
  verify->add_option("--max-l", vopt.max_ell)->check(CLI::PositiveNumber);
  verify->add_option("--vocab", vopt.vocab_sizes, "vocabulary sizes")->delimiter(',');
  verify->add_option("--depths", vopt.depths, "layer counts")->delimiter(',');
  verify->add_option("--ks", vopt.ks, "sub-process counts")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*analyze) return cmd_analyze(analyze_cfg, analyze_format);
    if (*sweep) return cmd_sweep(sweep_cfg, sweep_flags);
    if (*simulate) return cmd_simulate(sim_cfg, trials, sim_seed, threads);
    if (*schedule) return cmd_schedule(sched_cfg, matches_text, sched_seed, gantt, sched_out);
    if (*matchrate) return cmd_matchrate(mr_input, mr_k, mr_bucket, mr_format, mr_cfg);
    if (*verify) return cmd_verify(vopt);
  } catch (const ppd::trace::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
