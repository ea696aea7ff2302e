#include <gtest/gtest.h>

#include <random>

#include "ppd/core_types.hpp"
#include "ppd/stochastic.hpp"

namespace ppd {
namespace {

DecodingConfig reference_config(std::int64_t d_bar) { return {40, d_bar, 3, 128, Probability(0.6837)}; }

TEST(ValidateConfig, AcceptsHalfDepthReference) {
  const auto c = reference_config(20);
  EXPECT_EQ(validate_config(c, Regime::theorem), c);
}

TEST(ValidateConfig, RejectsBelowHalfDepthInTheoremRegime) {
  try {
    validate_config(reference_config(10), Regime::theorem);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("d_bar < d/2"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(validate_config(reference_config(10), Regime::any));
}

TEST(ValidateConfig, RejectsDbarAboveDepth) {
  try {
    validate_config(reference_config(41), Regime::any);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("d_bar > d"), std::string::npos) << e.what();
  }
}

TEST(ValidateConfig, OddDepthUsesIntegerComparison) {
  // d = 41: d_bar = 21 satisfies 2*21 >= 41, d_bar = 20 does not.
  EXPECT_NO_THROW(validate_config({41, 21, 1, 4, std::nullopt}, Regime::theorem));
  EXPECT_THROW(validate_config({41, 20, 1, 4, std::nullopt}, Regime::theorem), DomainError);
}

TEST(ValidateConfig, RejectsOtherRanges) {
  EXPECT_THROW(validate_config({0, 1, 0, 1, std::nullopt}, Regime::any), DomainError);
  EXPECT_THROW(validate_config({4, 0, 0, 1, std::nullopt}, Regime::any), DomainError);
  EXPECT_THROW(validate_config({4, 2, -1, 1, std::nullopt}, Regime::any), DomainError);
  EXPECT_THROW(validate_config({4, 2, 0, 0, std::nullopt}, Regime::any), DomainError);
  EXPECT_NO_THROW(validate_config({4, 4, 0, 1, std::nullopt}, Regime::theorem));
}

TEST(Probability, ClosedUnitInterval) {
  EXPECT_NO_THROW(Probability(0.0));
  EXPECT_NO_THROW(Probability(1.0));
  EXPECT_THROW(Probability(1.2), DomainError);
  EXPECT_THROW(Probability(-1e-9), DomainError);
  EXPECT_THROW(Probability(std::nan("")), DomainError);
}

TEST(MatchSequence, ParseAndFormat) {
  const auto m = MatchSequence::parse("TTFt01");
  EXPECT_EQ(m.to_string(), "TTFTFT");
  EXPECT_EQ(m.ell(), 7);
  EXPECT_EQ(m.failures(), 2);
  EXPECT_THROW(MatchSequence::parse("TX"), DomainError);
  EXPECT_EQ(MatchSequence().ell(), 1);
}

TEST(ConfigJson, RoundTripWithAndWithoutP) {
  const auto c = reference_config(20);
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  DecodingConfig trace_driven{8, 4, 1, 3, std::nullopt};
  EXPECT_EQ(config_from_json(config_to_json(trace_driven)), trace_driven);
  EXPECT_THROW(config_from_json(nlohmann::json{{"p_correct", 1.5}}), DomainError);
}

// Property: decompose -> reconstruct -> decompose is the identity, and the
// decomposition satisfies sum(X) = ell and N - 1 = failures.
TEST(RunDecompositionProperty, RoundTrip) {
  std::mt19937_64 gen(7);
  for (int iter = 0; iter < 500; ++iter) {
    const auto ell = std::uniform_int_distribution<int>(1, 300)(gen);
    const double p = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    std::bernoulli_distribution bit(p);
    std::vector<bool> bits(static_cast<std::size_t>(ell - 1));
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = bit(gen);
    const MatchSequence m(bits);
    const auto runs = stochastic::decompose_runs(m);
    ASSERT_EQ(runs.total(), ell);
    ASSERT_EQ(runs.n_runs() - 1, m.failures());
    for (auto x : runs.run_lengths) ASSERT_GE(x, 1);
    ASSERT_EQ(to_match_sequence(runs), m);
    ASSERT_EQ(stochastic::decompose_runs(to_match_sequence(runs)), runs);
  }
}

TEST(LatencyComputeReport, DerivedAverages) {
  const auto r = LatencyComputeReport::from_totals(140.0, 440.0, 5);
  EXPECT_DOUBLE_EQ(r.per_token_latency, 28.0);
  EXPECT_DOUBLE_EQ(r.avg_compute_per_time_unit, 440.0 / 140.0);
  EXPECT_DOUBLE_EQ(r.avg_compute_per_token, 88.0);
}

}  // namespace
}  // namespace ppd
