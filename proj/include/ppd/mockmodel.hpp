#pragma once

// A deterministic layered causal "language model" with no weights.
//
// Hidden states are 64-bit digests. The layer-0 hidden of position t is a
// digest of the prefix x_1..x_t; every layer applies the SplitMix64
// finalizer to (previous hidden, layer, seed, prefix digest). Token scores
// are finalizer outputs of (hidden, token id), so the early (layer d_bar)
// and final (layer d) rankings are independent unless `bias` copies the
// final ranking into the early classifier.
//
// decode_ppd runs the full pipelined state machine on this model and must
// reproduce decode_sequential token-for-token.

#include <algorithm>
#include <cstdint>
#include <future>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ppd/core_types.hpp"
#include "ppd/rng.hpp"
#include "ppd/trace.hpp"

namespace ppd::mock {

using TokenId = std::int64_t;
inline constexpr TokenId kEos = 0;

struct HiddenState {
  std::uint64_t value = 0;
  friend bool operator==(HiddenState, HiddenState) = default;
};

struct MockModel {
  std::int64_t vocab_size = 16;  // token ids 0..V-1, id 0 is EOS
  std::int64_t depth = 8;        // d
  std::uint64_t seed = 0;
  bool eos_enabled = false;
  // Probability that a position's early ranking is copied from the final
  // layer. Resolved deterministically per (seed, prefix).
  double bias = 0.0;

  void validate() const {
    if (vocab_size < 2) throw DomainError(fmt::format("vocab_size < 2 (V={})", vocab_size));
    if (depth < 1) throw DomainError(fmt::format("depth < 1 (d={})", depth));
    (void)Probability(bias);
  }
};

// ---------------------------------------------------------------------------
// Layers and classifiers

/// Digest of the empty prefix.
inline std::uint64_t empty_prefix_digest(const MockModel& m) {
  return rng::mix64(m.seed ^ 0x5bd1e9955bd1e995ULL);
}

/// Streaming prefix digest: digest(x_1..x_t, x_{t+1}).
inline std::uint64_t extend_digest(std::uint64_t digest, TokenId token) {
  return rng::combine(digest, static_cast<std::uint64_t>(token));
}

inline std::uint64_t prefix_digest(const MockModel& m, std::span<const TokenId> prefix) {
  std::uint64_t h = empty_prefix_digest(m);
  for (auto t : prefix) h = extend_digest(h, t);
  return h;
}

/// Layer-0 input hidden for the position whose prefix digest is given.
inline HiddenState embed(const MockModel& m, std::uint64_t prefix_digest) {
  return {rng::combine(prefix_digest, m.seed)};
}

inline HiddenState forward_layer(const MockModel& m, HiddenState prev, std::int64_t layer,
                                 std::uint64_t token_context_digest) {
  if (layer < 1 || layer > m.depth) {
    throw DomainError(fmt::format("layer {} outside [1, {}]", layer, m.depth));
  }
  const std::uint64_t key =
      rng::combine(m.seed + static_cast<std::uint64_t>(layer) * rng::kGoldenGamma,
                   token_context_digest);
  return {rng::mix64(prev.value ^ key)};
}

/// Applies layers first..last (inclusive) in order.
inline HiddenState forward_layers(const MockModel& m, HiddenState h, std::int64_t first,
                                  std::int64_t last, std::uint64_t ctx) {
  for (auto layer = first; layer <= last; ++layer) h = forward_layer(m, h, layer, ctx);
  return h;
}

inline std::uint64_t token_score(HiddenState h, TokenId v) {
  return rng::combine(h.value, static_cast<std::uint64_t>(v));
}

/// The k highest-scoring ids, ties broken by the smaller id.
inline std::vector<TokenId> early_topk(const MockModel& m, HiddenState hidden, std::int64_t k) {
  if (k < 1 || k > m.vocab_size) {
    throw DomainError(fmt::format("k outside [1, V] (k={}, V={})", k, m.vocab_size));
  }
  std::vector<std::pair<std::uint64_t, TokenId>> scored(static_cast<std::size_t>(m.vocab_size));
  for (TokenId v = 0; v < m.vocab_size; ++v) scored[static_cast<std::size_t>(v)] = {token_score(hidden, v), v};
  const auto better = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), better);
  std::vector<TokenId> out(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scored[i].second;
  return out;
}

/// Greedy argmax of the same scorer.
inline TokenId final_token(const MockModel& m, HiddenState hidden_at_d) {
  TokenId best = 0;
  std::uint64_t best_score = token_score(hidden_at_d, 0);
  for (TokenId v = 1; v < m.vocab_size; ++v) {
    const auto s = token_score(hidden_at_d, v);
    if (s > best_score) {
      best_score = s;
      best = v;
    }
  }
  return best;
}

inline bool bias_applies(const MockModel& m, std::uint64_t prefix_digest) {
  if (m.bias <= 0.0) return false;
  rng::SplitMix64 g(rng::combine(prefix_digest, m.seed ^ 0xb1a5b1a5b1a5b1a5ULL));
  return g.bernoulli(m.bias);
}

// ---------------------------------------------------------------------------
// Decoders

struct DecodeResult {
  std::vector<TokenId> tokens;
  MatchSequence match_trace;
  std::int64_t main_layer_count = 0;
  std::int64_t spec_layer_count = 0;
  // Early top-k candidates for each generated token (decode_ppd only).
  std::vector<std::vector<TokenId>> early_candidates;
};

/// Plain greedy decoding: a full d-layer forward per token.
inline DecodeResult decode_sequential(const MockModel& m, std::span<const TokenId> prompt,
                                      std::int64_t ell) {
  m.validate();
  if (ell < 1) throw DomainError(fmt::format("ell < 1 (ell={})", ell));
  DecodeResult r;
  std::uint64_t digest = prefix_digest(m, prompt);
  while (static_cast<std::int64_t>(r.tokens.size()) < ell) {
    const auto h = forward_layers(m, embed(m, digest), 1, m.depth, digest);
    r.main_layer_count += m.depth;
    const TokenId tok = final_token(m, h);
    r.tokens.push_back(tok);
    if (m.eos_enabled && tok == kEos) break;
    digest = extend_digest(digest, tok);
  }
  return r;
}

enum class Execution { serial, threaded };

/// Pipelined decoding with early prediction at layer d_bar and k
/// speculative sub-processes.
inline DecodeResult decode_ppd(const MockModel& m, std::span<const TokenId> prompt,
                               std::int64_t ell, std::int64_t d_bar, std::int64_t k,
                               Execution exec = Execution::serial) {
  m.validate();
  validate_config(DecodingConfig{m.depth, d_bar, k, ell, std::nullopt}, Regime::theorem);
  if (k < 1 || k > m.vocab_size) {
    throw DomainError(fmt::format("k outside [1, V] (k={}, V={})", k, m.vocab_size));
  }
  const std::int64_t d = m.depth;
  const std::int64_t s = d - d_bar;

  DecodeResult r;
  std::vector<bool> trace;
  std::uint64_t digest = prefix_digest(m, prompt);
  std::optional<HiddenState> handoff;  // layer-s hidden of the current position

  while (static_cast<std::int64_t>(r.tokens.size()) < ell) {
    // Main: head layers up to d_bar.
    HiddenState h = handoff ? *handoff : embed(m, digest);
    const std::int64_t head_first = handoff ? s + 1 : 1;
    h = forward_layers(m, h, head_first, d_bar, digest);
    r.main_layer_count += d_bar - head_first + 1;

    const HiddenState early_hidden =
        bias_applies(m, digest) ? forward_layers(m, h, d_bar + 1, d, digest) : h;
    auto candidates = early_topk(m, early_hidden, k);

    // Speculation window: main finishes layers d_bar+1..d while every
    // sub-process advances its candidate's next position to layer s.
    const auto run_main = [&] { return final_token(m, forward_layers(m, h, d_bar + 1, d, digest)); };
    const auto run_sub = [&](TokenId cand) {
      const auto cd = extend_digest(digest, cand);
      return forward_layers(m, embed(m, cd), 1, s, cd);
    };

    TokenId tok = 0;
    std::vector<HiddenState> sub_hidden(candidates.size());
    if (exec == Execution::threaded) {
      std::vector<std::future<HiddenState>> subs;
      subs.reserve(candidates.size());
      for (auto cand : candidates) subs.push_back(std::async(std::launch::async, run_sub, cand));
      tok = run_main();
      for (std::size_t i = 0; i < subs.size(); ++i) sub_hidden[i] = subs[i].get();
    } else {
      tok = run_main();
      for (std::size_t i = 0; i < candidates.size(); ++i) sub_hidden[i] = run_sub(candidates[i]);
    }
    r.main_layer_count += s;
    r.spec_layer_count += k * s;

    // Barrier: match check and handoff.
    const auto hit = std::find(candidates.begin(), candidates.end(), tok);
    const bool matched = hit != candidates.end();
    const auto hit_index = static_cast<std::size_t>(hit - candidates.begin());
    r.tokens.push_back(tok);
    r.early_candidates.push_back(std::move(candidates));
    if (m.eos_enabled && tok == kEos) break;
    if (static_cast<std::int64_t>(r.tokens.size()) == ell) break;

    trace.push_back(matched);
    handoff = matched ? std::optional(sub_hidden[hit_index]) : std::nullopt;
    digest = extend_digest(digest, tok);
  }
  r.match_trace = MatchSequence(std::move(trace));
  return r;
}

/// One record per position whose match outcome is in `result.match_trace`
/// (every generated token except the last, whose speculation is never used).
inline std::vector<trace::TraceRecord> emit_trace(const DecodeResult& result,
                                                  const std::string& example_id,
                                                  std::optional<std::int64_t> layer = std::nullopt) {
  if (result.early_candidates.size() != result.tokens.size()) {
    throw DomainError("emit_trace needs a result produced by decode_ppd");
  }
  std::vector<trace::TraceRecord> out;
  const std::size_t n = result.match_trace.size();
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({example_id, static_cast<std::int64_t>(i + 1), result.early_candidates[i],
                   result.tokens[i], layer});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exactness property suite

struct ExactnessOptions {
  std::int64_t instances = 1000;
  std::uint64_t seed = 0;
  std::int64_t max_ell = 32;
  std::vector<std::int64_t> vocab_sizes{4, 16, 64};
  std::vector<std::int64_t> depths{8, 40};
  std::vector<std::int64_t> ks{1, 3, 5};
  std::int64_t max_prompt = 8;
};

struct ExactnessInstance {
  std::uint64_t instance_seed = 0;
  MockModel model;
  std::vector<TokenId> prompt;
  std::int64_t ell = 1;
  std::int64_t d_bar = 1;
  std::int64_t k = 1;
};

struct ExactnessSummary {
  std::int64_t instances = 0;
  std::int64_t passed = 0;
  std::int64_t eos_instances = 0;
  std::int64_t eos_truncated = 0;  // rollouts that stopped before ell
  std::optional<ExactnessInstance> first_failure;
  std::string first_failure_reason;

  [[nodiscard]] bool ok() const noexcept { return passed == instances; }
};

/// Instance `index` of the suite, drawn from its own stream.
inline ExactnessInstance make_instance(const ExactnessOptions& opt, std::uint64_t index) {
  auto g = rng::SplitMix64::stream(opt.seed, index);
  const auto pick = [&](const std::vector<std::int64_t>& xs) {
    return xs[static_cast<std::size_t>(g.below(xs.size()))];
  };
  ExactnessInstance in;
  in.instance_seed = rng::combine(opt.seed, index);
  in.model.vocab_size = pick(opt.vocab_sizes);
  in.model.depth = pick(opt.depths);
  in.model.seed = g();
  in.model.eos_enabled = g.bernoulli(0.5);
  static constexpr double kBiases[] = {0.0, 0.0, 0.5, 0.9};
  in.model.bias = kBiases[g.below(4)];
  const std::int64_t lo = (in.model.depth + 1) / 2;
  in.d_bar = lo + static_cast<std::int64_t>(g.below(static_cast<std::uint64_t>(in.model.depth - lo + 1)));
  std::vector<std::int64_t> ks;
  for (auto k : opt.ks) {
    if (k <= in.model.vocab_size) ks.push_back(k);
  }
  in.k = ks.empty() ? in.model.vocab_size : pick(ks);
  in.ell = 1 + static_cast<std::int64_t>(g.below(static_cast<std::uint64_t>(opt.max_ell)));
  const auto plen = 1 + g.below(static_cast<std::uint64_t>(opt.max_prompt));
  in.prompt.resize(plen);
  // Prompt tokens avoid EOS so a rollout never starts "after" an EOS.
  for (auto& t : in.prompt) t = 1 + static_cast<TokenId>(g.below(static_cast<std::uint64_t>(in.model.vocab_size - 1)));
  return in;
}

/// Empty string when the instance passes, otherwise the first mismatch.
inline std::string check_instance(const ExactnessInstance& in) {
  const auto seq = decode_sequential(in.model, in.prompt, in.ell);
  const auto ppd = decode_ppd(in.model, in.prompt, in.ell, in.d_bar, in.k);
  if (seq.tokens != ppd.tokens) return "token output differs from sequential decoding";
  const auto n_gen = static_cast<std::int64_t>(ppd.tokens.size());
  if (ppd.match_trace.ell() != n_gen) return "match trace length != generated length - 1";
  const std::int64_t s = in.model.depth - in.d_bar;
  const std::int64_t n_runs = 1 + ppd.match_trace.failures();
  if (ppd.main_layer_count != in.d_bar * n_gen + s * n_runs) return "main layer count mismatch";
  if (ppd.spec_layer_count != in.k * s * n_gen) return "speculative layer count mismatch";
  return {};
}

inline ExactnessSummary run_exactness_suite(const ExactnessOptions& opt) {
  if (opt.instances < 1) throw DomainError("instances < 1");
  ExactnessSummary sum;
  sum.instances = opt.instances;
  for (std::int64_t i = 0; i < opt.instances; ++i) {
    const auto in = make_instance(opt, static_cast<std::uint64_t>(i));
    auto reason = check_instance(in);
    if (in.model.eos_enabled) {
      ++sum.eos_instances;
      if (static_cast<std::int64_t>(decode_sequential(in.model, in.prompt, in.ell).tokens.size()) < in.ell) {
        ++sum.eos_truncated;
      }
    }
    if (reason.empty()) {
      ++sum.passed;
    } else if (!sum.first_failure) {
      sum.first_failure = in;
      sum.first_failure_reason = std::move(reason);
    }
  }
  return sum;
}

inline nlohmann::json to_json(const ExactnessInstance& in) {
  return {{"instance_seed", in.instance_seed},
          {"model_seed", in.model.seed},
          {"V", in.model.vocab_size},
          {"d", in.model.depth},
          {"d_bar", in.d_bar},
          {"k", in.k},
          {"ell", in.ell},
          {"eos_enabled", in.model.eos_enabled},
          {"bias", in.model.bias},
          {"prompt", in.prompt}};
}

inline nlohmann::json to_json(const ExactnessSummary& s) {
  nlohmann::json j = {{"instances", s.instances},
                      {"passed", s.passed},
                      {"failed", s.instances - s.passed},
                      {"eos_instances", s.eos_instances},
                      {"eos_truncated", s.eos_truncated}};
  if (s.first_failure) {
    j["first_failure"] = to_json(*s.first_failure);
    j["first_failure"]["reason"] = s.first_failure_reason;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Golden rollout fixtures: {seed, prompt, d, d_bar, k, V, tokens, match_trace}

struct Rollout {
  std::uint64_t seed = 0;
  std::vector<TokenId> prompt;
  std::int64_t d = 0;
  std::int64_t d_bar = 0;
  std::int64_t k = 0;
  std::int64_t vocab_size = 0;
  std::vector<TokenId> tokens;
  std::string match_trace;  // "TF..." string
};

inline nlohmann::json to_json(const Rollout& g) {
  return {{"seed", g.seed}, {"prompt", g.prompt},           {"d", g.d},
          {"d_bar", g.d_bar}, {"k", g.k},                   {"V", g.vocab_size},
          {"tokens", g.tokens}, {"match_trace", g.match_trace}};
}

inline Rollout rollout_from_json(const nlohmann::json& j) {
  Rollout g;
  g.seed = j.at("seed").get<std::uint64_t>();
  g.prompt = j.at("prompt").get<std::vector<TokenId>>();
  g.d = j.at("d").get<std::int64_t>();
  g.d_bar = j.at("d_bar").get<std::int64_t>();
  g.k = j.at("k").get<std::int64_t>();
  g.vocab_size = j.at("V").get<std::int64_t>();
  g.tokens = j.at("tokens").get<std::vector<TokenId>>();
  g.match_trace = j.at("match_trace").get<std::string>();
  return g;
}

}  // namespace ppd::mock
