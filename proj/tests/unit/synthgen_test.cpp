#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "cpr/labeling.hpp"
#include "cpr/metrics.hpp"
#include "cpr/synthgen.hpp"

TEST(Synthgen, NoiselessPseudoLabelsAreExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = cpr::generate(cpr::ScenarioConfig::noiseless(seed));
    const auto agg = cpr::aggregate_passes(s.stack, {});
    EXPECT_EQ(cpr::dice(agg.labels, s.truth, 0), 100.0);
    EXPECT_EQ(cpr::dice(agg.labels, s.truth, 1), 100.0);
    for (float u : agg.uncertainty.tensor().data()) EXPECT_EQ(u, 0.0f);
  }
}

TEST(Synthgen, SameSeedSameScenario) {
  const auto a = cpr::generate(cpr::ScenarioConfig::under_confident(11));
  const auto b = cpr::generate(cpr::ScenarioConfig::under_confident(11));
  EXPECT_TRUE(cpr::bitwise_equal(a.stack.tensor(), b.stack.tensor()));
  EXPECT_TRUE(cpr::bitwise_equal(a.features.tensor(), b.features.tensor()));
  EXPECT_TRUE(cpr::bitwise_equal(a.truth.tensor(), b.truth.tensor()));
  const auto c = cpr::generate(cpr::ScenarioConfig::under_confident(12));
  EXPECT_FALSE(cpr::bitwise_equal(a.stack.tensor(), c.stack.tensor()));
}

TEST(Synthgen, SharedMeansSeedSharesRegionMeans) {
  auto a = cpr::ScenarioConfig::under_confident(1);
  auto b = cpr::ScenarioConfig::under_confident(2);
  a.means_seed = b.means_seed = 42;
  EXPECT_EQ(cpr::generate(a).region_means, cpr::generate(b).region_means);
}

TEST(Synthgen, CupLiesInsideDisc) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = cpr::generate(cpr::ScenarioConfig::under_confident(seed));
    std::size_t cup = 0;
    for (std::size_t v = 0; v < s.truth.pixels(); ++v) {
      if (s.truth.value(v, 0) == 1.0f) {
        ++cup;
        EXPECT_EQ(s.truth.value(v, 1), 1.0f);
      }
    }
    EXPECT_GT(cup, 0u);
  }
}

TEST(Synthgen, RegionMeansAreSeparable) {
  auto cfg = cpr::ScenarioConfig::under_confident(3);
  cfg.separation = 4.0;
  cfg.feature_noise = 1.0;
  const auto s = cpr::generate(cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < cfg.depth; ++k) {
        d2 += (s.region_means[i][k] - s.region_means[j][k]) * (s.region_means[i][k] - s.region_means[j][k]);
      }
      EXPECT_NEAR(std::sqrt(d2), 4.0, 1e-5);
    }
  }
  std::size_t correct = 0;
  for (std::size_t v = 0; v < s.features.pixels(); ++v) {
    const std::size_t region = s.truth.value(v, 0) == 1.0f ? 2 : (s.truth.value(v, 1) == 1.0f ? 1 : 0);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < 3; ++r) {
      double d = 0.0;
      for (std::size_t k = 0; k < cfg.depth; ++k) {
        const double diff = s.features.pixel(v)[k] - s.region_means[r][k];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = r;
      }
    }
    correct += best == region;
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(s.features.pixels()), 0.99);
}

TEST(Synthgen, ProtuberancesSitOnTheBoundary) {
  const auto s = cpr::generate(cpr::ScenarioConfig::under_confident(4));
  ASSERT_EQ(s.protuberances.size(), 6u);
  const std::size_t w = s.truth.width();
  for (const auto& p : s.protuberances) {
    const std::size_t v = p.y * w + p.x;
    EXPECT_EQ(s.truth.value(v, p.channel), 1.0f);
    const bool edge = s.truth.value(v - 1, p.channel) == 0.0f || s.truth.value(v + 1, p.channel) == 0.0f ||
                      s.truth.value(v - w, p.channel) == 0.0f || s.truth.value(v + w, p.channel) == 0.0f;
    EXPECT_TRUE(edge);
    EXPECT_GE(p.radius, 2.0);
    EXPECT_LE(p.radius, 4.0);
  }
}

TEST(Synthgen, UncertainCupDepressesInitialDice) {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = cpr::generate(cpr::ScenarioConfig::under_confident(seed));
    total += cpr::dice(cpr::aggregate_passes(s.stack, {}).labels, s.truth, 0);
  }
  EXPECT_LT(total / 5.0, 90.0);
}

TEST(Synthgen, RejectsBadConfig) {
  auto cfg = cpr::ScenarioConfig::noiseless(0);
  cfg.height = 4;
  EXPECT_ANY_THROW(cpr::generate(cfg));
  cfg = cpr::ScenarioConfig::noiseless(0);
  cfg.passes = 0;
  EXPECT_THROW(cfg.validate(), cpr::ConfigError);
}
