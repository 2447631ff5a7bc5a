#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fire/logit_pipeline.hpp"

using namespace fire;

namespace {

SamplingConfig cfg(double t, std::optional<std::size_t> k = std::nullopt, std::optional<double> p = std::nullopt,
                   double min_p = 0.0) {
  return SamplingConfig{t, k, p, min_p};
}

double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

std::vector<TokenId> support_of(const LogitVector& l) {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < l.size(); ++i)
    if (l.is_kept(i)) out.push_back(static_cast<TokenId>(i));
  return out;
}

}  // namespace

TEST(LogitVector, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(LogitVector(std::vector<double>{}), SourceError);
  EXPECT_THROW(LogitVector({1.0, std::numeric_limits<double>::quiet_NaN()}), SourceError);
  EXPECT_THROW(LogitVector({1.0, std::numeric_limits<double>::infinity()}), SourceError);
  EXPECT_THROW(LogitVector({1.0, 2.0}, {0, 0}), SourceError);
}

TEST(ApplyTemperature, IdentityAndDivision) {
  const auto same = apply_temperature(LogitVector({2.0, 1.0}), 1.0);
  EXPECT_EQ(same.score(0), 2.0);
  EXPECT_EQ(same.score(1), 1.0);

  const auto halved = apply_temperature(LogitVector({2.0, 1.0}), 2.0);
  EXPECT_EQ(halved.score(0), 1.0);
  EXPECT_EQ(halved.score(1), 0.5);
}

TEST(ApplyTemperature, HotTemperatureIsNearUniform) {
  const auto d = softmax(apply_temperature(LogitVector({3.0, 0.0, -3.0}), 30.0));
  double worst = 0.0;
  for (double p : d.probs()) worst = std::max(worst, std::abs(p - 1.0 / 3.0));
  // max |softmax([0.1, 0, -0.1]) - 1/3| = 0.0338320677775921... (40-digit evaluation)
  EXPECT_NEAR(worst, 0.0338320677775921, 1e-14);
  EXPECT_LT(worst, 0.034);
}

TEST(ApplyTemperature, RejectsBadTemperature) {
  EXPECT_THROW(apply_temperature(LogitVector({1.0}), 0.0), ConfigError);
  EXPECT_THROW(apply_temperature(LogitVector({1.0}), -1.0), ConfigError);
  EXPECT_THROW(apply_temperature(LogitVector({1.0}), std::numeric_limits<double>::infinity()), ConfigError);
  EXPECT_THROW(apply_temperature(LogitVector({1.0}), std::numeric_limits<double>::quiet_NaN()), ConfigError);
}

TEST(TopK, KeepsHighest) {
  EXPECT_EQ(support_of(top_k_filter(LogitVector({2, 1, 0, -1}), 2)), (std::vector<TokenId>{0, 1}));
}

TEST(TopK, KAtLeastVocabularyIsNoOp) {
  const LogitVector l({5, 5, 5});
  EXPECT_EQ(top_k_filter(l, 3), l);
  EXPECT_EQ(top_k_filter(l, 10), l);
}

TEST(TopK, TiesGoToLowerIndex) {
  EXPECT_EQ(support_of(top_k_filter(LogitVector({1, 1, 0}), 1)), (std::vector<TokenId>{0}));
  EXPECT_EQ(support_of(top_k_filter(LogitVector({0, 3, 3, 3}), 2)), (std::vector<TokenId>{1, 2}));
}

TEST(TopK, ZeroIsConfigError) { EXPECT_THROW(top_k_filter(LogitVector({1.0}), 0), ConfigError); }

TEST(TopP, KeepsSmallestCoveringPrefix) {
  const auto d = top_p_filter(Distribution::from_probs({0.5, 0.3, 0.2}), 0.7);
  EXPECT_EQ(d.support(), (std::vector<TokenId>{0, 1}));
  EXPECT_NEAR(d[0], 0.625, 1e-15);
  EXPECT_NEAR(d[1], 0.375, 1e-15);
  EXPECT_EQ(d[2], 0.0);
}

TEST(TopP, FullMassIsUnchanged) {
  const auto in = Distribution::from_probs({0.5, 0.3, 0.2});
  EXPECT_EQ(top_p_filter(in, 1.0), in);
}

TEST(TopP, FirstTokenCovers) {
  const auto d = top_p_filter(Distribution::from_probs({0.9, 0.1}), 0.5);
  EXPECT_EQ(d.support(), (std::vector<TokenId>{0}));
  EXPECT_EQ(d[0], 1.0);
}

TEST(TopP, TieAtBoundaryGoesToLowerIndex) {
  const auto d = top_p_filter(Distribution::from_probs({0.25, 0.25, 0.25, 0.25}), 0.5);
  EXPECT_EQ(d.support(), (std::vector<TokenId>{0, 1}));
}

TEST(TopP, RejectsOutOfRange) {
  const auto d = Distribution::from_probs({1.0});
  EXPECT_THROW(top_p_filter(d, 0.0), ConfigError);
  EXPECT_THROW(top_p_filter(d, 1.5), ConfigError);
  EXPECT_THROW(top_p_filter(d, -0.1), ConfigError);
}

TEST(MinP, BoundaryTokenIsKept) {
  const auto in = Distribution::from_probs({0.5, 0.3, 0.15, 0.05});
  const auto d = min_p_filter(in, 0.1);
  EXPECT_EQ(d.support(), (std::vector<TokenId>{0, 1, 2, 3}));
}

TEST(MinP, ZeroIsBitwiseNoOp) {
  const auto in = Distribution::from_probs({0.1, 0.2, 0.7});
  EXPECT_EQ(min_p_filter(in, 0.0), in);
}

TEST(MinP, DropsBelowThreshold) {
  const auto d = min_p_filter(Distribution::from_probs({0.8, 0.15, 0.05}), 0.2);
  EXPECT_EQ(d.support(), (std::vector<TokenId>{0}));
  EXPECT_EQ(d[0], 1.0);
}

TEST(MinP, RejectsOutOfRange) {
  const auto d = Distribution::from_probs({1.0});
  EXPECT_THROW(min_p_filter(d, 1.0), ConfigError);
  EXPECT_THROW(min_p_filter(d, -0.01), ConfigError);
}

TEST(Distribution, FromProbsValidates) {
  EXPECT_THROW(Distribution::from_probs({}), ArgumentError);
  EXPECT_THROW(Distribution::from_probs({0.5, 0.4}), ArgumentError);
  EXPECT_THROW(Distribution::from_probs({1.5, -0.5}), ArgumentError);
  EXPECT_THROW(Distribution::from_probs({0.0, 0.0}), ArgumentError);
}

TEST(BuildDistribution, EqualLogitsAreUniform) {
  const auto d = build_distribution(LogitVector({0, 0, 0, 0}), cfg(1.0));
  for (double p : d.probs()) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(BuildDistribution, TopKThenSoftmax) {
  const auto d = build_distribution(LogitVector({10, 0, 0}), cfg(1.0, 2, 1.0));
  EXPECT_EQ(d.support(), (std::vector<TokenId>{0, 1}));
  // e^10 / (e^10 + 1) = 0.99995460213129756560... (40-digit evaluation)
  EXPECT_NEAR(d[0], 0.9999546021312976, 1e-15);
  EXPECT_NEAR(d[1], 1.0 - 0.9999546021312976, 1e-15);
}

TEST(BuildDistribution, HotEqualLogitsWithTopK) {
  const auto d = build_distribution(LogitVector({1, 1, 1, 1, 1, 1}), cfg(30.0, 4, 1.0));
  EXPECT_EQ(d.support(), (std::vector<TokenId>{0, 1, 2, 3}));
  for (TokenId t : d.support()) EXPECT_DOUBLE_EQ(d[t], 0.25);
}

TEST(BuildDistribution, RespectsSourceMask) {
  const auto d = build_distribution(LogitVector({5.0, 9.0, 1.0}, {1, 0, 1}), cfg(1.0));
  EXPECT_EQ(d[1], 0.0);
  EXPECT_GT(d[0], d[2]);
}

TEST(BuildDistribution, InvalidConfigThrows) {
  EXPECT_THROW(build_distribution(LogitVector({1.0}), cfg(0.0)), ConfigError);
  EXPECT_THROW(build_distribution(LogitVector({1.0}), cfg(1.0, 0)), ConfigError);
  EXPECT_THROW(build_distribution(LogitVector({1.0}), cfg(1.0, {}, 0.0)), ConfigError);
  EXPECT_THROW(build_distribution(LogitVector({1.0}), cfg(1.0, {}, {}, 1.0)), ConfigError);
}

// ---------------------------------------------------------------------------
// Property tests over random logits
// ---------------------------------------------------------------------------

class PipelineProperties : public ::testing::Test {
 protected:
  std::mt19937_64 rng{20240611};

  std::vector<double> random_logits(std::size_t v, double spread) {
    std::uniform_real_distribution<double> u(-spread / 2, spread / 2);
    std::vector<double> out(v);
    for (auto& x : out) x = u(rng);
    return out;
  }
  std::size_t random_size(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  }
  SamplingConfig random_config(std::size_t v) {
    SamplingConfig c;
    c.temperature = std::uniform_real_distribution<double>(0.1, 50.0)(rng);
    if (rng() % 2) c.top_k = random_size(1, v + 2);
    if (rng() % 2) c.top_p = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    if (rng() % 2) c.min_p = std::uniform_real_distribution<double>(0.0, 0.9)(rng);
    return c;
  }
};

TEST_F(PipelineProperties, IdentityEqualsPlainSoftmax) {
  for (int trial = 0; trial < 500; ++trial) {
    const auto logits = random_logits(random_size(1, 64), 20.0);
    const auto d = build_distribution(LogitVector(logits), cfg(1.0));
    const double m = *std::max_element(logits.begin(), logits.end());
    long double z = 0.0L;
    for (double x : logits) z += std::exp(static_cast<long double>(x - m));
    for (std::size_t i = 0; i < logits.size(); ++i)
      EXPECT_NEAR(d[i], static_cast<double>(std::exp(static_cast<long double>(logits[i] - m)) / z), 1e-12);
  }
}

TEST_F(PipelineProperties, NormalizedWithNonEmptySupport) {
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t v = random_size(1, 64);
    const auto d = build_distribution(LogitVector(random_logits(v, 30.0)), random_config(v));
    EXPECT_NEAR(sum(d.probs()), 1.0, 1e-12);
    EXPECT_FALSE(d.support().empty());
    for (double p : d.probs()) EXPECT_GE(p, 0.0);
  }
}

TEST_F(PipelineProperties, UniformLimitBound) {
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t v = random_size(2, 64);
    SamplingConfig c = cfg(1000.0, random_size(1, v));
    const auto d = build_distribution(LogitVector(random_logits(v, 10.0)), c);
    const auto support = d.support();
    const double uniform = 1.0 / static_cast<double>(support.size());
    for (TokenId t : support) EXPECT_LT(std::abs(d[t] - uniform), std::exp(10.0 / 1000.0) - 1.0);
    for (TokenId t : support) EXPECT_LT(std::abs(d[t] - uniform), 0.011);
  }
}

TEST_F(PipelineProperties, TemperaturePreservesRanking) {
  for (int trial = 0; trial < 300; ++trial) {
    const auto logits = random_logits(random_size(2, 40), 20.0);
    const double t = std::uniform_real_distribution<double>(0.01, 100.0)(rng);
    const auto scaled = apply_temperature(LogitVector(logits), t);
    for (std::size_t i = 0; i < logits.size(); ++i)
      for (std::size_t j = 0; j < logits.size(); ++j)
        if (logits[i] > logits[j]) {
          EXPECT_GE(scaled.score(i), scaled.score(j));
        }
    const auto argmax = std::max_element(logits.begin(), logits.end()) - logits.begin();
    const auto s = scaled.scores();
    EXPECT_EQ(std::max_element(s.begin(), s.end()) - s.begin(), argmax);
  }
}

TEST_F(PipelineProperties, FiltersAreMonotone) {
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t v = random_size(2, 64);
    const LogitVector logits(random_logits(v, 12.0));
    std::size_t k1 = random_size(1, v), k2 = random_size(1, v);
    if (k1 > k2) std::swap(k1, k2);
    const auto s1 = support_of(top_k_filter(logits, k1));
    const auto s2 = support_of(top_k_filter(logits, k2));
    EXPECT_TRUE(std::includes(s2.begin(), s2.end(), s1.begin(), s1.end()));

    double p1 = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    double p2 = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    if (p1 > p2) std::swap(p1, p2);
    const auto base = softmax(logits);
    const auto n1 = top_p_filter(base, p1).support();
    const auto n2 = top_p_filter(base, p2).support();
    EXPECT_TRUE(std::includes(n2.begin(), n2.end(), n1.begin(), n1.end()));
  }
}

TEST_F(PipelineProperties, Deterministic) {
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t v = random_size(1, 64);
    const LogitVector logits(random_logits(v, 10.0));
    const auto c = random_config(v);
    EXPECT_EQ(build_distribution(logits, c), build_distribution(logits, c));
  }
}
