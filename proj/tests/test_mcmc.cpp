#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "ddpmc/diagnostics.hpp"
#include "ddpmc/mcmc.hpp"
#include "ddpmc/posttau.hpp"
#include "ddpmc/simulation.hpp"
#include "ddpmc/slice.hpp"

using namespace ddpmc;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "ddpmc_test_mcmc";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

PseudoDataset scenario_data(std::size_t n, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.scenario = Scenario::kI;
  cfg.n = n;
  cfg.seed = seed;
  return build_design(generate_scenario(cfg).raw, scenario_schema());
}

ChainConfig small_config(std::size_t iterations = 60) {
  ChainConfig c;
  c.iterations = iterations;
  c.burn_in = 10;
  c.thin = 2;
  c.truncation = 4;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(SliceSampler, StandardNormalMoments) {
  RngStream rng(101, 0);
  auto target = [](const Eigen::VectorXd& x) { return -0.5 * x.squaredNorm(); };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(1, 5.0);
  const int draws = 100000;
  double s1 = 0.0;
  double s2 = 0.0;
  for (int k = 0; k < draws; ++k) {
    x = slice_update_vector(target, x, w, rng).x;
    s1 += x(0);
    s2 += x(0) * x(0);
  }
  const double mean = s1 / draws;
  const double var = s2 / draws - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(SliceSampler, CorrelatedBivariateTarget) {
  // Corr 0.8 normal; the hyperrectangle sampler must still get the covariance.
  RngStream rng(102, 0);
  Eigen::Matrix2d prec;
  prec << 1.0, -0.8, -0.8, 1.0;
  prec /= 0.36;
  auto target = [&](const Eigen::VectorXd& x) { return -0.5 * x.dot(prec * x); };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(2, 5.0);
  double sxy = 0.0;
  double sxx = 0.0;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) {
    x = slice_update_vector(target, x, w, rng).x;
    sxy += x(0) * x(1);
    sxx += x(0) * x(0);
  }
  EXPECT_NEAR(sxx / draws, 1.0, 0.05);
  EXPECT_NEAR(sxy / draws, 0.8, 0.05);
}

TEST(SliceSampler, StepOutWidensNarrowBox) {
  RngStream rng(103, 0);
  auto target = [](const Eigen::VectorXd& x) { return -0.5 * x.squaredNorm() / 100.0; };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  SliceOptions opts;
  opts.max_step_outs = 50;
  double s2 = 0.0;
  const int draws = 40000;
  for (int k = 0; k < draws; ++k) {
    x = slice_update_vector(target, x, Eigen::VectorXd::Constant(1, 1.0), rng, opts).x;
    s2 += x(0) * x(0);
  }
  EXPECT_NEAR(s2 / draws, 100.0, 6.0);
}

TEST(SliceSampler, RejectsBadInputs) {
  RngStream rng(1, 0);
  auto target = [](const Eigen::VectorXd& x) { return -x.squaredNorm(); };
  EXPECT_THROW(slice_update_vector(target, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(1), rng), ConfigError);
  EXPECT_THROW(slice_update_vector(target, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), rng), ConfigError);
  auto bad = [](const Eigen::VectorXd&) { return -std::numeric_limits<double>::infinity(); };
  EXPECT_THROW(slice_update_vector(bad, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), rng), NumericalError);
}

TEST(ChainConfig, SavedCountAndValidation) {
  ChainConfig c;
  EXPECT_EQ(c.saved_count(), 3000u);
  EXPECT_FALSE(c.saves(5000));
  EXPECT_TRUE(c.saves(5005));
  EXPECT_TRUE(c.saves(20000));
  ChainConfig bad = c;
  bad.burn_in = c.iterations;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.thin = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.truncation = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.widths_v = {1.0, -1.0};
  EXPECT_THROW(bad.validate(), ConfigError);
  const nlohmann::json j = c;
  EXPECT_EQ(nlohmann::json(j.get<ChainConfig>()), j);
}

TEST(RunChain, SavesThinnedRecords) {
  const auto data = scenario_data(80, 3);
  const auto prior = PriorSpec::isotropic(2);
  const auto cfg = small_config();
  for (auto kind : {ModelKind::kDdpmc, ModelKind::kLdvr}) {
    const auto chain = run_chain(data, prior, kind, cfg);
    ASSERT_EQ(chain.size(), cfg.saved_count());
    EXPECT_EQ(chain.iteration.front(), 12u);
    EXPECT_EQ(chain.iteration.back(), 60u);
    EXPECT_EQ(chain.n, 80u);
    for (const auto& rec : chain.params) EXPECT_EQ(rec.size(), chain.param_width());
    for (double lp : chain.log_posterior) EXPECT_TRUE(std::isfinite(lp));
  }
}

TEST(RunChain, LogPosteriorMatchesRecordedState) {
  const auto data = scenario_data(60, 4);
  const auto prior = PriorSpec::isotropic(2);
  const auto chain = run_chain(data, prior, ModelKind::kDdpmc, small_config());
  for (std::size_t m = 0; m < chain.size(); m += 7) {
    const auto s = Chain::unpack_ddpmc(chain.params[m], chain.truncation(), chain.p);
    EXPECT_NEAR(chain.log_posterior[m], log_prior(s, prior) + ddpmc_loglik(data, s), 1e-8);
  }
}

TEST(RunChain, IdenticalSeedsGiveIdenticalFiles) {
  const auto data = scenario_data(70, 5);
  const auto prior = PriorSpec::isotropic(2);
  const auto dir = temp_dir();
  for (auto kind : {ModelKind::kDdpmc, ModelKind::kLdvr}) {
    const auto a = dir / ("a_" + to_string(kind) + ".chain");
    const auto b = dir / ("b_" + to_string(kind) + ".chain");
    run_chain_to_file(data, prior, kind, small_config(), a);
    run_chain_to_file(data, prior, kind, small_config(), b);
    EXPECT_EQ(slurp(a), slurp(b));
    auto other = small_config();
    other.seed = 6;
    run_chain_to_file(data, prior, kind, other, b);
    EXPECT_NE(slurp(a), slurp(b));
  }
}

TEST(RunChain, ResumeReproducesUninterruptedRun) {
  const auto data = scenario_data(70, 6);
  const auto prior = PriorSpec::isotropic(2);
  const auto dir = temp_dir();
  for (auto kind : {ModelKind::kDdpmc, ModelKind::kLdvr}) {
    const auto full = dir / ("full_" + to_string(kind) + ".chain");
    const auto cut = dir / ("cut_" + to_string(kind) + ".chain");
    const auto whole = run_chain_to_file(data, prior, kind, small_config(), full);
    const std::string bytes = slurp(full);
    const std::size_t header = bytes.find('\n') + 1;
    const std::size_t record = (kRecordPrefix + whole.param_width()) * 8;
    // Keep 9 complete records plus a torn tenth.
    std::ofstream(cut, std::ios::binary) << bytes.substr(0, header + 9 * record + record / 2);
    EXPECT_EQ(read_chain(cut).size(), 9u);
    const auto resumed = run_chain_to_file(data, prior, kind, small_config(), cut, true);
    EXPECT_EQ(slurp(cut), bytes) << to_string(kind);
    EXPECT_EQ(resumed.params, whole.params);
  }
}

TEST(RunChain, ResumeRejectsDifferentConfig) {
  const auto data = scenario_data(50, 7);
  const auto prior = PriorSpec::isotropic(2);
  const auto path = temp_dir() / "mismatch.chain";
  run_chain_to_file(data, prior, ModelKind::kDdpmc, small_config(), path);
  auto other = small_config();
  other.truncation = 5;
  EXPECT_THROW(run_chain_to_file(data, prior, ModelKind::kDdpmc, other, path, true), ConfigError);
}

TEST(ChainFile, RoundTripAndNames) {
  const auto data = scenario_data(50, 8);
  const auto prior = PriorSpec::isotropic(2);
  const auto path = temp_dir() / "roundtrip.chain";
  const auto chain = run_chain_to_file(data, prior, ModelKind::kLdvr, small_config(), path);
  const auto back = read_chain(path);
  EXPECT_EQ(back.params, chain.params);
  EXPECT_EQ(back.log_posterior, chain.log_posterior);
  EXPECT_EQ(back.iteration, chain.iteration);
  EXPECT_EQ(back.rng_position, chain.rng_position);
  EXPECT_EQ(back.n, 50u);
  EXPECT_EQ(back.parameter_names().size(), back.param_width());
  EXPECT_THROW(read_chain(temp_dir() / "missing.chain"), DataError);
}

TEST(RunChain, RecoversConstantDependence) {
  // Gaussian copula with rho = 0.5 everywhere: tau = 1/3 at every x.
  RngStream rng(201, 0);
  RawDataset raw;
  for (int i = 0; i < 400; ++i) {
    const auto u = sample_gaussian_copula(0.5, rng);
    raw.y1.push_back(u.u1);
    raw.y2.push_back(u.u2);
    raw.numeric["x"].push_back(rng.uniform());
  }
  const auto data = build_design(raw, scenario_schema());
  ChainConfig cfg;
  cfg.iterations = 1500;
  cfg.burn_in = 500;
  cfg.thin = 5;
  cfg.truncation = 6;
  const auto chain = run_chain(data, PriorSpec::isotropic(2), ModelKind::kDdpmc, cfg);
  const auto grid = covariate_grid(data.encoder, {0.1, 0.5, 0.9});
  const auto curve = tau_curve(chain, grid, 0.95);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    EXPECT_NEAR(curve.median[g], 1.0 / 3.0, 0.08) << g;
    EXPECT_LT(curve.lower[g], 1.0 / 3.0 + 0.02);
    EXPECT_GT(curve.upper[g], 1.0 / 3.0 - 0.02);
  }
}

TEST(ChainConfig, ReferenceRunLengths) {
  ChainConfig a;
  a.iterations = 110000;
  a.burn_in = 10000;
  a.thin = 10;
  EXPECT_EQ(a.saved_count(), 10000u);
  ChainConfig b;
  b.iterations = 300000;
  b.burn_in = 200000;
  b.thin = 20;
  EXPECT_EQ(b.saved_count(), 5000u);
}

TEST(RunChain, EmptyDataRecoversPrior) {
  PseudoDataset empty;
  empty.design.resize(0, 2);
  Eigen::Matrix2d cov;
  cov << 1.0, 0.3, 0.3, 0.5;
  PriorSpec prior = PriorSpec::isotropic(2);
  prior.rho = MvnPrior(Eigen::Vector2d(0.7, -0.4), cov);
  ChainConfig cfg;
  cfg.iterations = 4000;
  cfg.burn_in = 200;
  cfg.thin = 1;
  cfg.truncation = 3;
  const auto chain = run_chain(empty, prior, ModelKind::kDdpmc, cfg);
  // beta_rho rows follow the beta_v block in each record.
  const std::size_t v_width = (cfg.truncation - 1) * 2;
  std::vector<double> intercepts;
  for (const auto& rec : chain.params)
    for (std::size_t j = 0; j < cfg.truncation; ++j) intercepts.push_back(rec[v_width + 2 * j]);
  double mean = std::accumulate(intercepts.begin(), intercepts.end(), 0.0) / static_cast<double>(intercepts.size());
  // Slice draws are mildly autocorrelated; allow a generous MC error.
  EXPECT_NEAR(mean, 0.7, 0.08);
}

TEST(RunChain, IndependentChainsAgreeOnTau) {
  // Data from a known two-component mixture at fixed weights and correlations.
  RngStream rng(401, 0);
  RawDataset raw;
  for (int i = 0; i < 200; ++i) {
    const auto u = sample_gaussian_copula(rng.uniform() < 0.4 ? 0.8 : -0.3, rng);
    raw.y1.push_back(u.u1);
    raw.y2.push_back(u.u2);
    raw.numeric["x"].push_back(rng.uniform());
  }
  const auto data = build_design(raw, scenario_schema());
  const auto grid = covariate_grid(data.encoder, {0.2, 0.5, 0.8});
  ChainConfig cfg;
  cfg.iterations = 1500;
  cfg.burn_in = 300;
  cfg.thin = 3;
  cfg.truncation = 5;
  std::vector<std::vector<std::vector<double>>> draws;
  for (std::uint64_t stream : {0u, 1u}) {
    cfg.stream_id = stream;
    draws.push_back(tau_draws(run_chain(data, PriorSpec::isotropic(2), ModelKind::kDdpmc, cfg), grid, 1));
  }
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double se2 = 0.0;
    double means[2];
    for (int c = 0; c < 2; ++c) {
      const auto& d = draws[static_cast<std::size_t>(c)][g];
      const double m = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
      double var = 0.0;
      for (double t : d) var += (t - m) * (t - m);
      var /= static_cast<double>(d.size() - 1);
      se2 += var / effective_sample_size(d);
      means[c] = m;
    }
    EXPECT_LT(std::abs(means[0] - means[1]), 3.0 * std::sqrt(se2)) << g;
  }
}
