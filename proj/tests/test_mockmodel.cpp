#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <unordered_set>

#include "ppd/mockmodel.hpp"
#include "ppd/trace.hpp"

namespace ppd::mock {
namespace {

MockModel model(std::int64_t V, std::int64_t d, std::uint64_t seed, bool eos = false, double bias = 0.0) {
  return MockModel{V, d, seed, eos, bias};
}

TEST(ForwardLayer, Deterministic) {
  const auto m = model(16, 8, 3);
  EXPECT_EQ(forward_layer(m, {123}, 4, 99), forward_layer(m, {123}, 4, 99));
  EXPECT_NE(forward_layer(m, {0}, 1, 0), forward_layer(m, {0}, 2, 0));
  EXPECT_THROW(forward_layer(m, {0}, 0, 0), DomainError);
  EXPECT_THROW(forward_layer(m, {0}, 9, 0), DomainError);
}

TEST(ForwardLayer, NoCollisionsOnRandomProbes) {
  const auto m = model(16, 64, 11);
  rng::SplitMix64 g(5);
  std::unordered_set<std::uint64_t> outputs;
  std::set<std::tuple<std::uint64_t, std::int64_t, std::uint64_t>> inputs;
  for (int i = 0; i < 10000; ++i) {
    const HiddenState prev{g()};
    const auto layer = 1 + static_cast<std::int64_t>(g.below(64));
    const auto ctx = g();
    if (!inputs.insert({prev.value, layer, ctx}).second) continue;
    outputs.insert(forward_layer(m, prev, layer, ctx).value);
  }
  EXPECT_EQ(outputs.size(), inputs.size());
}

TEST(ForwardLayer, ChainingComposes) {
  const auto m = model(16, 12, 4);
  const std::vector<TokenId> prefix{3, 1, 4};
  const auto ctx = prefix_digest(m, prefix);
  HiddenState h = embed(m, ctx);
  for (std::int64_t l = 1; l <= m.depth; ++l) h = forward_layer(m, h, l, ctx);
  EXPECT_EQ(h, forward_layers(m, embed(m, ctx), 1, m.depth, ctx));
  EXPECT_EQ(h, forward_layers(m, forward_layers(m, embed(m, ctx), 1, 5, ctx), 6, 12, ctx));
}

// A sub-process state for the matched candidate, advanced by the main
// process, is the same hidden as a from-scratch forward at that position.
TEST(ForwardLayer, HandoffEqualsFullForward) {
  const auto m = model(64, 40, 21);
  const std::vector<TokenId> prefix{5, 9, 2, 6};
  const auto base = prefix_digest(m, prefix);
  for (std::int64_t d_bar = 20; d_bar <= 40; ++d_bar) {
    const std::int64_t s = 40 - d_bar;
    for (TokenId next : {0, 7, 63}) {
      const auto ctx = extend_digest(base, next);
      const auto sub = forward_layers(m, embed(m, ctx), 1, s, ctx);
      const auto resumed = forward_layers(m, sub, s + 1, 40, ctx);
      std::vector<TokenId> full_prefix = prefix;
      full_prefix.push_back(next);
      const auto full_ctx = prefix_digest(m, full_prefix);
      ASSERT_EQ(full_ctx, ctx);
      ASSERT_EQ(resumed, forward_layers(m, embed(m, full_ctx), 1, 40, full_ctx));
    }
  }
}

TEST(EarlyTopk, FullListIsPermutation) {
  const auto m = model(16, 8, 1);
  auto all = early_topk(m, {42}, 16);
  std::sort(all.begin(), all.end());
  for (TokenId v = 0; v < 16; ++v) EXPECT_EQ(all[static_cast<std::size_t>(v)], v);
  EXPECT_THROW(early_topk(m, {42}, 17), DomainError);
  EXPECT_THROW(early_topk(m, {42}, 0), DomainError);
}

TEST(EarlyTopk, PrefixProperty) {
  const auto m = model(64, 8, 1);
  rng::SplitMix64 g(8);
  for (int i = 0; i < 200; ++i) {
    const HiddenState h{g()};
    const auto top5 = early_topk(m, h, 5);
    for (std::int64_t k = 1; k < 5; ++k) {
      const auto topk = early_topk(m, h, k);
      ASSERT_TRUE(std::equal(topk.begin(), topk.end(), top5.begin()));
    }
  }
}

TEST(EarlyTopk, TopOneIsUniform) {
  const auto m = model(16, 8, 1);
  rng::SplitMix64 g(2);
  const int n = 16000;
  std::vector<int> counts(16, 0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(early_topk(m, {g()}, 1)[0])];
  const double expected = n / 16.0;
  const double sigma = std::sqrt(n * (1.0 / 16.0) * (15.0 / 16.0));
  for (int v = 0; v < 16; ++v) EXPECT_NEAR(counts[static_cast<std::size_t>(v)], expected, 3.0 * sigma) << v;
}

TEST(FinalToken, AgreesWithTopOne) {
  const auto m = model(64, 8, 1);
  rng::SplitMix64 g(9);
  for (int i = 0; i < 500; ++i) {
    const HiddenState h{g()};
    ASSERT_EQ(final_token(m, h), early_topk(m, h, 1)[0]);
    ASSERT_EQ(final_token(m, h), final_token(m, h));
  }
}

TEST(DecodeSequential, OneToken) {
  const auto m = model(16, 8, 1);
  const std::vector<TokenId> prompt{1, 2};
  const auto r = decode_sequential(m, prompt, 1);
  EXPECT_EQ(r.tokens.size(), 1u);
  EXPECT_EQ(r.main_layer_count, 8);
  EXPECT_TRUE(r.match_trace.empty());
  EXPECT_THROW(decode_sequential(m, prompt, 0), DomainError);
}

TEST(DecodeSequential, EosAsFirstOutput) {
  const std::vector<TokenId> prompt{3, 1};
  std::optional<std::uint64_t> found;
  for (std::uint64_t seed = 0; seed < 1000 && !found; ++seed) {
    if (decode_sequential(model(4, 8, seed), prompt, 1).tokens[0] == kEos) found = seed;
  }
  ASSERT_TRUE(found.has_value());
  const auto r = decode_sequential(model(4, 8, *found, true), prompt, 20);
  EXPECT_EQ(r.tokens, std::vector<TokenId>{kEos});
  const auto p = decode_ppd(model(4, 8, *found, true), prompt, 20, 5, 2);
  EXPECT_EQ(p.tokens, r.tokens);
  EXPECT_TRUE(p.match_trace.empty());
}

TEST(DecodeSequential, PromptOrderMatters) {
  rng::SplitMix64 g(13);
  int differing = 0;
  for (int i = 0; i < 100; ++i) {
    const auto m = model(16, 8, g());
    std::vector<TokenId> a(4);
    for (auto& t : a) t = 1 + static_cast<TokenId>(g.below(15));
    auto b = a;
    std::reverse(b.begin(), b.end());
    if (a == b) std::swap(b[0], b[1] == b[0] ? b[2] : b[1]);
    if (a == b) b[0] = b[0] % 15 + 1;
    ASSERT_NE(a, b);
    differing += decode_sequential(m, a, 8).tokens != decode_sequential(m, b, 8).tokens ? 1 : 0;
  }
  EXPECT_EQ(differing, 100);
}

TEST(DecodePpd, ExactnessSuite) {
  const auto summary = run_exactness_suite(ExactnessOptions{});
  EXPECT_TRUE(summary.ok()) << to_json(summary).dump();
  EXPECT_EQ(summary.instances, 1000);
  EXPECT_GT(summary.eos_truncated, 0);
}

TEST(DecodePpd, ExhaustiveSpeculationAlwaysMatches) {
  for (std::int64_t V : {4, 16}) {
    const auto m = model(V, 40, 77);
    const std::vector<TokenId> prompt{1};
    const auto r = decode_ppd(m, prompt, 20, 26, V);
    EXPECT_EQ(r.match_trace.failures(), 0);
    EXPECT_EQ(r.match_trace.size(), 19u);
    EXPECT_EQ(r.main_layer_count, 26 * 20 + (40 - 26));
    EXPECT_EQ(r.tokens, decode_sequential(m, prompt, 20).tokens);
  }
}

TEST(DecodePpd, FullDepthEarlyLayerSavesNothing) {
  const auto m = model(16, 8, 5, false, 0.9);
  const std::vector<TokenId> prompt{2, 3};
  const auto r = decode_ppd(m, prompt, 12, 8, 3);
  EXPECT_EQ(r.main_layer_count, 8 * 12);
  EXPECT_EQ(r.spec_layer_count, 0);
  EXPECT_EQ(r.tokens, decode_sequential(m, prompt, 12).tokens);
}

TEST(DecodePpd, RejectsOutOfRegime) {
  const auto m = model(16, 40, 5);
  const std::vector<TokenId> prompt{2};
  EXPECT_THROW(decode_ppd(m, prompt, 4, 19, 1), DomainError);
  EXPECT_THROW(decode_ppd(m, prompt, 4, 20, 17), DomainError);
  EXPECT_THROW(decode_ppd(m, prompt, 4, 20, 0), DomainError);
}

TEST(DecodePpd, ThreadedExecutionIsIdentical) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto m = model(16, 40, seed, true, 0.7);
    const std::vector<TokenId> prompt{4, 4, 2};
    const auto a = decode_ppd(m, prompt, 24, 22, 3, Execution::serial);
    const auto b = decode_ppd(m, prompt, 24, 22, 3, Execution::threaded);
    EXPECT_EQ(a.tokens, b.tokens);
    EXPECT_EQ(a.match_trace, b.match_trace);
    EXPECT_EQ(a.main_layer_count, b.main_layer_count);
    EXPECT_EQ(a.spec_layer_count, b.spec_layer_count);
    EXPECT_EQ(a.early_candidates, b.early_candidates);
  }
}

TEST(DecodePpd, BiasRaisesMatchRate) {
  const std::vector<TokenId> prompt{1, 2, 3};
  std::int64_t hits_plain = 0;
  std::int64_t hits_biased = 0;
  std::int64_t total = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto plain = decode_ppd(model(64, 8, seed), prompt, 64, 4, 1);
    const auto biased = decode_ppd(model(64, 8, seed, false, 0.9), prompt, 64, 4, 1);
    total += static_cast<std::int64_t>(plain.match_trace.size());
    hits_plain += static_cast<std::int64_t>(plain.match_trace.size()) - plain.match_trace.failures();
    hits_biased += static_cast<std::int64_t>(biased.match_trace.size()) - biased.match_trace.failures();
  }
  // Expected rates: 1/64 without bias, 0.9 + 0.1/64 with it.
  EXPECT_LT(static_cast<double>(hits_plain) / static_cast<double>(total), 0.05);
  EXPECT_NEAR(static_cast<double>(hits_biased) / static_cast<double>(total), 0.9 + 0.1 / 64.0, 0.03);
}

TEST(EmitTrace, MembershipReproducesMatchTrace) {
  const auto m = model(16, 40, 31, false, 0.5);
  const std::vector<TokenId> prompt{7, 7};
  const auto r = decode_ppd(m, prompt, 30, 24, 3);
  const auto recs = emit_trace(r, "ex0", 24);
  ASSERT_EQ(recs.size(), r.match_trace.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].position, static_cast<std::int64_t>(i + 1));
    EXPECT_EQ(trace::matches_at(recs[i], 3), r.match_trace[i]);
    EXPECT_EQ(recs[i].layer, 24);
  }
  EXPECT_THROW(emit_trace(decode_sequential(m, prompt, 5), "x"), DomainError);
}

TEST(EmitTrace, ExhaustiveSpeculationRateIsOne) {
  const auto m = model(4, 8, 3);
  const std::vector<TokenId> prompt{1};
  const auto recs = emit_trace(decode_ppd(m, prompt, 32, 4, 4), "ex");
  EXPECT_EQ(trace::match_rate(recs, 4).p_hat, 1.0);
}

TEST(EmitTrace, UnbiasedRateIsOneOverV) {
  std::vector<trace::TraceRecord> recs;
  const std::vector<TokenId> prompt{1, 5};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = decode_ppd(model(16, 8, seed), prompt, 201, 4, 1);
    auto part = emit_trace(r, "s" + std::to_string(seed));
    recs.insert(recs.end(), part.begin(), part.end());
  }
  ASSERT_GE(recs.size(), 10000u);
  const auto rep = trace::match_rate(recs, 1);
  const auto ci = trace::wilson_interval(rep.matches, rep.total_positions, 3.0);
  EXPECT_LE(ci.lo, 1.0 / 16.0);
  EXPECT_GE(ci.hi, 1.0 / 16.0);
}

// Golden rollout committed under tests/data. Set PPD_REGENERATE_GOLDEN=1 to
// rewrite it from decode_sequential.
TEST(Golden, RolloutIsReproducible) {
  const std::string path = std::string(PPD_TEST_DATA_DIR) + "/golden_rollout.json";
  Rollout fresh;
  fresh.seed = 20240601;
  fresh.prompt = {12, 7, 33, 1};
  fresh.d = 40;
  fresh.d_bar = 24;
  fresh.k = 3;
  fresh.vocab_size = 16;
  const MockModel m{fresh.vocab_size, fresh.d, fresh.seed, false, 0.0};
  fresh.tokens = decode_sequential(m, fresh.prompt, 48).tokens;
  fresh.match_trace = decode_ppd(m, fresh.prompt, 48, fresh.d_bar, fresh.k).match_trace.to_string();

  if (std::getenv("PPD_REGENERATE_GOLDEN") != nullptr) {
    std::ofstream(path) << to_json(fresh).dump(2) << '\n';
  }
  std::ifstream in(path);
  ASSERT_TRUE(in.good()) << path;
  const auto golden = rollout_from_json(nlohmann::json::parse(in));
  EXPECT_EQ(golden.tokens, fresh.tokens);
  EXPECT_EQ(golden.match_trace, fresh.match_trace);
  EXPECT_EQ(golden.prompt, fresh.prompt);
  const MockModel gm{golden.vocab_size, golden.d, golden.seed, false, 0.0};
  EXPECT_EQ(decode_ppd(gm, golden.prompt, 48, golden.d_bar, golden.k).tokens, golden.tokens);
}

}  // namespace
}  // namespace ppd::mock
