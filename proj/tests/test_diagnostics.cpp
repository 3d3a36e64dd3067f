#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ddpmc/diagnostics.hpp"
#include "ddpmc/rng.hpp"

using namespace ddpmc;

namespace {

std::vector<double> ar1(std::size_t n, double phi, std::uint64_t seed) {
  RngStream rng(seed, 0);
  std::vector<double> x(n);
  double prev = rng.normal() / std::sqrt(1.0 - phi * phi);
  for (auto& v : x) {
    prev = phi * prev + rng.normal();
    v = prev;
  }
  return x;
}

}  // namespace

TEST(Spectrum0, Ar1Process) {
  // Innovation variance 1: S(0) = 1 / (1 - phi)^2.
  for (double phi : {0.0, 0.5, 0.8}) {
    const auto x = ar1(100000, phi, 7);
    const double expected = 1.0 / ((1.0 - phi) * (1.0 - phi));
    EXPECT_NEAR(spectrum0_ar(x), expected, 0.06 * expected) << phi;
  }
}

TEST(EffectiveSampleSize, Ar1Process) {
  // ESS = n (1 - phi) / (1 + phi).
  for (double phi : {0.0, 0.5, 0.9}) {
    const auto x = ar1(50000, phi, 11);
    const double expected = 50000.0 * (1.0 - phi) / (1.0 + phi);
    EXPECT_NEAR(effective_sample_size(x), expected, 0.1 * expected) << phi;
  }
}

TEST(EffectiveSampleSize, AntitheticCapsAtPairs) {
  std::vector<double> x(1000);
  for (std::size_t t = 0; t < x.size(); ++t) x[t] = t % 2 == 0 ? 1.0 : -1.0;
  EXPECT_TRUE(std::isfinite(effective_sample_size(x)));
}

TEST(Geweke, StationaryScoresAreStandardNormal) {
  // Monte Carlo over independent AR(1) chains: z should be ~N(0, 1).
  double s1 = 0.0;
  double s2 = 0.0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    const double z = geweke_z(ar1(2000, 0.6, 1000 + static_cast<std::uint64_t>(r)));
    s1 += z;
    s2 += z * z;
  }
  const double mean = s1 / reps;
  const double var = s2 / reps - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.2);
  EXPECT_GT(var, 0.7);
  EXPECT_LT(var, 1.4);
}

TEST(Geweke, DetectsDrift) {
  auto x = ar1(3000, 0.3, 5);
  for (std::size_t t = 0; t < x.size(); ++t) x[t] += 3.0 * static_cast<double>(t) / 3000.0;
  EXPECT_LT(geweke_z(x), -5.0);
}

TEST(DiagnoseSeries, DegenerateAndShort) {
  const std::vector<double> flat(500, 2.5);
  const auto d = diagnose_series("flat", flat);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.mean, 2.5);
  EXPECT_TRUE(std::isnan(d.ess));
  const nlohmann::json j = d;
  EXPECT_TRUE(j["ess"].is_null());
  EXPECT_THROW(diagnose_series("short", std::vector<double>(kMinDiagnosticDraws - 1, 1.0)), DomainError);
}

TEST(Diagnostics, CoversEveryParameter) {
  Chain chain;
  chain.model = ModelKind::kLdvr;
  chain.p = 2;
  chain.config.truncation = 3;
  const auto a = ar1(300, 0.2, 1);
  const auto b = ar1(300, 0.4, 2);
  for (std::size_t m = 0; m < 300; ++m) {
    chain.iteration.push_back(m + 1);
    chain.rng_position.push_back(0);
    chain.log_posterior.push_back(a[m]);
    chain.params.push_back({a[m], b[m], 0.3, 0.6});
  }
  ASSERT_EQ(chain.param_width(), 4u);
  const auto out = diagnostics(chain);
  ASSERT_EQ(out.size(), 5u);
  EXPECT_EQ(out[0].name, "log_posterior");
  EXPECT_TRUE(out[3].degenerate);
  EXPECT_FALSE(out[2].degenerate);
}

TEST(Geweke, IidChainsRarelyExceedThree) {
  int outside = 0;
  double ess_ratio = 0.0;
  const int reps = 300;
  for (int r = 0; r < reps; ++r) {
    const auto x = ar1(1000, 0.0, 5000 + static_cast<std::uint64_t>(r));
    outside += std::abs(geweke_z(x)) >= 3.0;
    ess_ratio += effective_sample_size(x) / 1000.0;
  }
  EXPECT_LE(outside, 3);
  EXPECT_NEAR(ess_ratio / reps, 1.0, 0.1);
}

TEST(EffectiveSampleSize, HalfCorrelatedChainIsOneThird) {
  double ratio = 0.0;
  for (int r = 0; r < 20; ++r) ratio += effective_sample_size(ar1(5000, 0.5, 7000 + static_cast<std::uint64_t>(r))) / 5000.0;
  EXPECT_NEAR(ratio / 20.0, 1.0 / 3.0, 0.1);
}
