#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ddpmc/copula.hpp"
#include "ddpmc/data.hpp"
#include "ddpmc/error.hpp"
#include "ddpmc/numerics.hpp"
#include "ddpmc/rng.hpp"

namespace ddpmc {

enum class Scenario { kI, kII };

inline std::string to_string(Scenario s) { return s == Scenario::kI ? "I" : "II"; }

inline Scenario parse_scenario(const std::string& s) {
  if (s == "I" || s == "1") return Scenario::kI;
  if (s == "II" || s == "2") return Scenario::kII;
  throw ConfigError("unknown scenario '" + s + "' (expected I or II)");
}

struct ScenarioConfig {
  Scenario scenario = Scenario::kI;
  std::size_t n = 250;
  double nu = 3.0;
  /// Probability of the t component in Scenario II as a function of x:
  /// "identity" (x), "complement" (1 - x) or "half" (1/2).
  std::string mix_weight_fn = "identity";
  std::uint64_t seed = 1;
  std::uint64_t stream_id = 0;

  void validate() const {
    if (n < 10) throw ConfigError("scenario: n must be at least 10");
    if (!(nu > 0.0) || !std::isfinite(nu)) throw ConfigError("scenario: nu must be positive");
    if (mix_weight_fn != "identity" && mix_weight_fn != "complement" && mix_weight_fn != "half")
      throw ConfigError("scenario: unknown mix_weight_fn '" + mix_weight_fn + "'");
  }

  double mix_weight(double x) const {
    if (mix_weight_fn == "identity") return x;
    if (mix_weight_fn == "complement") return 1.0 - x;
    return 0.5;
  }
};

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
  j = nlohmann::json{{"scenario", to_string(c.scenario)}, {"n", c.n},       {"nu", c.nu},
                     {"mix_weight_fn", c.mix_weight_fn},   {"seed", c.seed}, {"stream_id", c.stream_id}};
}

inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
  const ScenarioConfig d;
  c.scenario = parse_scenario(j.value("scenario", to_string(d.scenario)));
  c.n = j.value("n", d.n);
  c.nu = j.value("nu", d.nu);
  c.mix_weight_fn = j.value("mix_weight_fn", d.mix_weight_fn);
  c.seed = j.value("seed", d.seed);
  c.stream_id = j.value("stream_id", d.stream_id);
}

inline double scenario_one_rho(double x) { return x; }
inline double scenario_two_t_rho(double x) { return -x * (1.0 - x) * (1.0 - x); }
inline double scenario_two_gumbel_alpha(double x) { return x * x * (1.0 - x) + 1.0; }

/// One latent copula draw at covariate value x.
inline UnitPair scenario_pair(const ScenarioConfig& config, double x, RngStream& rng) {
  if (config.scenario == Scenario::kI) return sample_t_copula(scenario_one_rho(x), config.nu, rng);
  if (rng.uniform() < config.mix_weight(x)) return sample_t_copula(scenario_two_t_rho(x), config.nu, rng);
  return sample_gumbel_copula(scenario_two_gumbel_alpha(x), rng);
}

struct SimulatedData {
  RawDataset raw;                // y1, y2 on standard normal margins; numeric["x"]
  std::vector<UnitPair> latent;  // copula draws before the margin transform
};

/// Schema used for simulated data: one continuous covariate "x".
inline CovariateSchema scenario_schema() {
  CovariateSchema s;
  s.y1 = "y1";
  s.y2 = "y2";
  s.continuous = {"x"};
  return s;
}

inline SimulatedData generate_scenario(const ScenarioConfig& config) {
  config.validate();
  RngStream rng(config.seed, config.stream_id);
  SimulatedData out;
  auto& xs = out.raw.numeric["x"];
  for (std::size_t i = 0; i < config.n; ++i) {
    const double x = rng.uniform();
    const UnitPair u = scenario_pair(config, x, rng);
    xs.push_back(x);
    out.latent.push_back(u);
    out.raw.y1.push_back(std_normal_quantile(u.u1));
    out.raw.y2.push_back(std_normal_quantile(u.u2));
  }
  return out;
}

/// Default covariate grid for integrated L1: 100 equally spaced points on
/// [0.01, 0.99].
inline std::vector<double> il1_grid(std::size_t points = 100, double lo = 0.01, double hi = 0.99) {
  if (points == 0) throw ConfigError("grid: at least one point required");
  if (points == 1) return {0.5 * (lo + hi)};
  std::vector<double> g(points);
  for (std::size_t l = 0; l < points; ++l)
    g[l] = lo + (hi - lo) * static_cast<double>(l) / static_cast<double>(points - 1);
  return g;
}

struct ConcordanceEstimate {
  double tau = 0.0;
  double standard_error = 0.0;
};

/// Kendall's tau of a bivariate law by Monte Carlo: 2 P(concordant) - 1
/// over independent pairs of draws.
template <class Draw>
ConcordanceEstimate concordance_tau(Draw&& draw, std::size_t pairs, RngStream& rng) {
  if (pairs < 2) throw DomainError("concordance_tau: at least two pairs required");
  std::size_t concordant = 0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const UnitPair a = draw(rng);
    const UnitPair b = draw(rng);
    if ((a.u1 - b.u1) * (a.u2 - b.u2) > 0.0) ++concordant;
  }
  const double p = static_cast<double>(concordant) / static_cast<double>(pairs);
  return {2.0 * p - 1.0, 2.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(pairs))};
}

/// Stream ids at or above this value are reserved for truth oracles so they
/// never overlap the data-generating streams.
inline constexpr std::uint64_t kOracleStreamBase = std::uint64_t{1} << 32;

/// True conditional tau over `grid`. Scenario I is exact; Scenario II is a
/// Monte Carlo concordance estimate with `pairs` pairs per point, each grid
/// point on its own stream, so the result does not depend on `threads`.
inline std::vector<double> scenario_truth(const ScenarioConfig& config, const std::vector<double>& grid,
                                          std::size_t pairs = 1000000, unsigned threads = 1) {
  config.validate();
  for (double x : grid)
    if (!(x > 0.0 && x < 1.0)) throw DomainError("scenario_truth: grid points must lie in (0,1)");
  std::vector<double> out(grid.size());
  if (config.scenario == Scenario::kI) {
    for (std::size_t l = 0; l < grid.size(); ++l) out[l] = elliptical_tau(scenario_one_rho(grid[l]));
    return out;
  }
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t l = begin; l < grid.size(); l += step) {
      RngStream rng(config.seed, kOracleStreamBase + l);
      const double x = grid[l];
      out[l] = concordance_tau([&](RngStream& r) { return scenario_pair(config, x, r); }, pairs, rng).tau;
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(grid.size(), 1)));
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& t : pool) t.join();
  }
  return out;
}

}  // namespace ddpmc
