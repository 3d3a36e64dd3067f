#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "ddpmc/posttau.hpp"
#include "ddpmc/simulation.hpp"

using namespace ddpmc;

namespace {

DesignEncoder unit_encoder() {
  RawDataset r;
  r.y1 = {1, 2, 3};
  r.y2 = {3, 1, 2};
  r.numeric["x"] = {0.0, 0.5, 1.0};
  return build_design(r, scenario_schema()).encoder;
}

// LDVR chain whose every draw has the same tau at every x.
Chain constant_tau_chain(double tau, std::size_t draws) {
  // tau = (2/pi) asin(rho), rho = 2 / (|eta| + 1) - 1.
  const double rho = std::sin(0.5 * std::numbers::pi * tau);
  const double eta = 2.0 / (rho + 1.0) - 1.0;
  Chain c;
  c.model = ModelKind::kLdvr;
  c.p = 2;
  c.n = 246;
  c.config.truncation = 3;
  LdvrState s;
  s.beta = Eigen::Vector2d(eta, 0.0);
  s.v = Eigen::Vector2d(0.4, 0.5);
  for (std::size_t m = 0; m < draws; ++m) {
    c.iteration.push_back(m + 1);
    c.rng_position.push_back(0);
    c.log_posterior.push_back(0.0);
    c.params.push_back(Chain::pack(s));
  }
  return c;
}

}  // namespace

TEST(TauTestStatistic, WorkedValue) {
  EXPECT_NEAR(tau_test_statistic(0.1, 246), 2.3360, 1e-3);
  EXPECT_NEAR(tau_test_statistic(-0.1, 246), -2.3360, 1e-3);
  EXPECT_THROW(tau_test_statistic(0.1, 1), DomainError);
}

TEST(Exceedance, ConstantDrawsAreAllOrNothing) {
  const double threshold = std_normal_quantile(0.975) * std::sqrt(2.0 * 497.0 / (9.0 * 246.0 * 245.0));
  EXPECT_EQ(exceedance_proportion(std::vector<double>(50, threshold * 1.01), 246, 0.975), 1.0);
  EXPECT_EQ(exceedance_proportion(std::vector<double>(50, threshold * 0.99), 246, 0.975), 0.0);
  EXPECT_EQ(exceedance_proportion(std::vector<double>(50, -threshold * 1.01), 246, 0.975), 1.0);

  std::vector<double> mixed(40, 0.0);
  for (std::size_t k = 0; k < 20; ++k) mixed[k] = 0.5;
  EXPECT_EQ(exceedance_proportion(mixed, 246, 0.975), 0.5);
  EXPECT_THROW(exceedance_proportion({}, 246, 0.975), DomainError);
}

TEST(Exceedance, ChainOverloadUsesTauAtX) {
  const auto enc = unit_encoder();
  const auto pt = covariate_grid(enc, {0.4}).front();
  EXPECT_EQ(exceedance_proportion(constant_tau_chain(0.09, 30), pt, 246, 0.975), 1.0);
  EXPECT_EQ(exceedance_proportion(constant_tau_chain(0.078, 30), pt, 246, 0.975), 0.0);
}

TEST(Exceedance, MonotoneInP) {
  RngStream rng(3, 0);
  std::vector<double> taus(500);
  for (auto& t : taus) t = 0.1 * rng.normal();
  double prev = 1.0;
  for (double p : {0.6, 0.75, 0.9, 0.95, 0.975, 0.99, 0.999}) {
    const double q = exceedance_proportion(taus, 246, p);
    EXPECT_LE(q, prev);
    prev = q;
  }
}

TEST(Quantiles, FiniteSetAndBands) {
  EXPECT_DOUBLE_EQ(sorted_quantile({-0.2, 0.0, 0.2}, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(sorted_quantile({-0.2, 0.0, 0.2}, 0.25), -0.1);
  EXPECT_DOUBLE_EQ(sorted_quantile({-0.2, 0.0, 0.2}, 1.0), 0.2);
  RngStream rng(4, 0);
  std::vector<std::vector<double>> draws(1, std::vector<double>(1000));
  for (auto& t : draws[0]) t = rng.uniform(-1.0, 1.0);
  const std::vector<GridPoint> grid(1);
  const auto narrow = summarize_tau_draws(grid, draws, 0.5);
  const auto wide = summarize_tau_draws(grid, draws, 0.95);
  EXPECT_LE(wide.lower[0], narrow.lower[0]);
  EXPECT_GE(wide.upper[0], narrow.upper[0]);
  EXPECT_LE(narrow.lower[0], narrow.median[0]);
  EXPECT_LE(narrow.median[0], narrow.upper[0]);
  const auto zero = summarize_tau_draws(grid, draws, 0.0);
  EXPECT_EQ(zero.lower[0], zero.median[0]);
  EXPECT_THROW(summarize_tau_draws(grid, draws, 1.0), ConfigError);
}

TEST(IntegratedL1, MetricProperties) {
  const std::vector<double> a{0.1, 0.2, 0.3, 0.4};
  const std::vector<double> b{0.2, 0.2, 0.1, 0.4};
  const std::vector<double> c{0.0, 0.5, 0.3, 0.3};
  EXPECT_EQ(integrated_l1(a, a), 0.0);
  EXPECT_DOUBLE_EQ(integrated_l1(a, b), integrated_l1(b, a));
  EXPECT_NEAR(integrated_l1(a, b), 0.3 / 4.0, 1e-15);
  EXPECT_LE(integrated_l1(a, c), integrated_l1(a, b) + integrated_l1(b, c) + 1e-15);
  EXPECT_THROW(integrated_l1(a, {0.1}), DomainError);
  EXPECT_THROW(integrated_l1({}, {}), DomainError);
}

TEST(TauAtX, DdpmcMatchesConcordanceOracle) {
  RngStream rng(5, 0);
  auto s = DdpmcState::zeros(4, 2);
  for (Eigen::Index j = 0; j < s.beta_v.size(); ++j) s.beta_v.data()[j] = 1.2 * rng.normal();
  for (Eigen::Index j = 0; j < s.beta_rho.size(); ++j) s.beta_rho.data()[j] = 1.2 * rng.normal();
  for (double x : {0.1, 0.6}) {
    const Eigen::Vector2d row(1.0, x);
    const auto m = ddpmc_mixture_at_x(s, row);
    auto draw = [&](RngStream& r) {
      double u = r.uniform();
      std::size_t j = 0;
      while (j + 1 < m.weights.size() && u > m.weights[j]) u -= m.weights[j++];
      return sample_gaussian_copula(m.rhos[j], r);
    };
    RngStream oracle_rng(6, static_cast<std::uint64_t>(x * 10));
    const auto est = concordance_tau(draw, 400000, oracle_rng);
    EXPECT_NEAR(tau_at_x(s, row), est.tau, 4.0 * est.standard_error) << x;
  }
}

TEST(TauAtX, LdvrIsEllipticalOfCalibration) {
  LdvrState s;
  s.beta = Eigen::Vector2d(0.3, 1.7);
  s.v = Eigen::Vector2d(0.5, 0.5);
  const double eta = 0.3 + 1.7 * 0.25;
  EXPECT_NEAR(tau_at_x(s, Eigen::Vector2d(1.0, 0.5)),
              2.0 / std::numbers::pi * std::asin(2.0 / (eta + 1.0) - 1.0), 1e-14);
}

TEST(SectionGrid, ProductOrderAndCount) {
  // Two continuous, a 2-level categorical and a 4-band discretization.
  RawDataset r;
  r.y1 = {1, 2, 3, 4};
  r.y2 = {4, 3, 1, 2};
  r.numeric["bmi"] = {18, 40, 25, 30};
  r.numeric["trig"] = {80, 250, 150, 100};
  r.numeric["age"] = {40, 50, 60, 70};
  r.labels["sex"] = {"F", "M", "M", "F"};
  CovariateSchema schema;
  schema.continuous = {"bmi", "trig"};
  schema.categorical = {{"sex", {"F", "M"}}};
  schema.discretizations = {{"age", "age_band", {45.0, 55.0, 65.0}, {"<45", "45-54", "55-64", "65+"}}};
  const auto enc = build_design(r, schema).encoder;

  const auto spec = nlohmann::json::parse(R"({"vary": {"name": "trig", "from": 80, "to": 250, "points": 5},
                                              "fixed": {"bmi": [22, 27, 32]}})")
                        .get<SectionGridSpec>();
  const auto grid = build_section_grid(enc, spec);
  ASSERT_EQ(grid.size(), 2u * 4u * 3u * 5u);
  EXPECT_EQ(grid[0].labels.at("sex"), "F");
  EXPECT_EQ(grid[0].labels.at("age_band"), "<45");
  EXPECT_EQ(grid[0].continuous, (std::vector<double>{22, 80}));
  EXPECT_EQ(grid[4].continuous, (std::vector<double>{22, 250}));
  EXPECT_EQ(grid[5].continuous, (std::vector<double>{27, 80}));
  EXPECT_EQ(grid.back().labels.at("sex"), "M");
  EXPECT_EQ(grid.back().labels.at("age_band"), "65+");
  for (const auto& pt : grid) EXPECT_TRUE(pt.row.isApprox(enc.encode(pt.continuous, pt.labels)));

  auto restricted = spec;
  restricted.levels["sex"] = {"M"};
  EXPECT_EQ(build_section_grid(enc, restricted).size(), 4u * 3u * 5u);
  auto bad = spec;
  bad.levels["sex"] = {"X"};
  EXPECT_THROW(build_section_grid(enc, bad), ConfigError);
  bad = spec;
  bad.fixed.clear();
  EXPECT_THROW(build_section_grid(enc, bad), ConfigError);
  bad = spec;
  bad.vary = "sex";
  EXPECT_THROW(build_section_grid(enc, bad), ConfigError);
}

TEST(TauCurve, ConstantChainAndCsv) {
  const auto enc = unit_encoder();
  const auto grid = covariate_grid(enc, {0.2, 0.8});
  const auto chain = constant_tau_chain(0.3, 20);
  const auto curve = tau_curve(chain, grid, 0.95);
  for (std::size_t g = 0; g < 2; ++g) {
    EXPECT_NEAR(curve.median[g], 0.3, 1e-12);
    EXPECT_NEAR(curve.lower[g], 0.3, 1e-12);
    EXPECT_NEAR(curve.upper[g], 0.3, 1e-12);
  }
  std::ostringstream out;
  write_tau_curve_csv(out, curve, enc.schema());
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "x,median,lower,upper");
  const auto report = tau_test_report(grid, tau_draws(chain, grid), 246, 0.975);
  std::ostringstream test_out;
  write_tau_test_csv(test_out, report, enc.schema());
  EXPECT_EQ(test_out.str(), "x,proportion\n0.2,1\n0.8,1\n");

  Chain wrong = chain;
  wrong.p = 3;
  EXPECT_THROW(tau_draws(wrong, grid), ConfigError);
}

TEST(TauDraws, ThreadCountDoesNotChangeResults) {
  RngStream rng(9, 0);
  Chain c;
  c.model = ModelKind::kDdpmc;
  c.p = 2;
  c.config.truncation = 3;
  for (int m = 0; m < 25; ++m) {
    auto s = DdpmcState::zeros(3, 2);
    for (Eigen::Index j = 0; j < s.beta_v.size(); ++j) s.beta_v.data()[j] = rng.normal();
    for (Eigen::Index j = 0; j < s.beta_rho.size(); ++j) s.beta_rho.data()[j] = rng.normal();
    c.iteration.push_back(static_cast<std::uint64_t>(m));
    c.rng_position.push_back(0);
    c.log_posterior.push_back(0.0);
    c.params.push_back(Chain::pack(s));
  }
  const auto grid = covariate_grid(unit_encoder(), il1_grid(17));
  EXPECT_EQ(tau_draws(c, grid, 1), tau_draws(c, grid, 4));
}
