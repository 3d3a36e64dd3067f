#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddpmc/error.hpp"
#include "ddpmc/mcmc.hpp"

namespace ddpmc {

inline constexpr std::size_t kMinDiagnosticDraws = 200;

namespace detail {

inline double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double autocovariance(std::span<const double> x, double mean, std::size_t lag) {
  const std::size_t n = x.size();
  double acc = 0.0;
  for (std::size_t t = 0; t + lag < n; ++t) acc += (x[t] - mean) * (x[t + lag] - mean);
  return acc / static_cast<double>(n);
}

}  // namespace detail

/// Spectral density at frequency zero from an autoregressive fit
/// (Yule-Walker, order chosen by AIC up to 10 log10(n)).
inline double spectrum0_ar(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 3) throw DomainError("spectrum0_ar: series too short");
  const double mean = detail::mean_of(x);
  const auto max_order = std::min<std::size_t>(n - 1, static_cast<std::size_t>(10.0 * std::log10(static_cast<double>(n))));
  std::vector<double> gamma(max_order + 1);
  for (std::size_t k = 0; k <= max_order; ++k) gamma[k] = detail::autocovariance(x, mean, k);
  if (gamma[0] <= 0.0) return 0.0;

  // Levinson-Durbin recursion over increasing orders.
  std::vector<double> phi;
  std::vector<double> best_phi;
  double sigma2 = gamma[0];
  double best_sigma2 = sigma2;
  double best_aic = static_cast<double>(n) * std::log(sigma2);
  for (std::size_t k = 1; k <= max_order; ++k) {
    double num = gamma[k];
    for (std::size_t j = 0; j < phi.size(); ++j) num -= phi[j] * gamma[k - 1 - j];
    const double reflection = num / sigma2;
    std::vector<double> next(k);
    for (std::size_t j = 0; j + 1 < k; ++j) next[j] = phi[j] - reflection * phi[k - 2 - j];
    next[k - 1] = reflection;
    phi = std::move(next);
    sigma2 *= 1.0 - reflection * reflection;
    if (!(sigma2 > 0.0)) break;
    const double aic = static_cast<double>(n) * std::log(sigma2) + 2.0 * static_cast<double>(k);
    if (aic < best_aic) {
      best_aic = aic;
      best_sigma2 = sigma2;
      best_phi = phi;
    }
  }
  const double phi_sum = std::accumulate(best_phi.begin(), best_phi.end(), 0.0);
  return best_sigma2 / ((1.0 - phi_sum) * (1.0 - phi_sum));
}

/// Geweke convergence z-score comparing the first `first` and last `last`
/// fractions of the chain.
inline double geweke_z(std::span<const double> x, double first = 0.1, double last = 0.5) {
  const std::size_t n = x.size();
  const auto na = static_cast<std::size_t>(std::floor(first * static_cast<double>(n)));
  const auto nb = static_cast<std::size_t>(std::floor(last * static_cast<double>(n)));
  const auto a = x.subspan(0, na);
  const auto b = x.subspan(n - nb, nb);
  const double var = spectrum0_ar(a) / static_cast<double>(na) + spectrum0_ar(b) / static_cast<double>(nb);
  if (!(var > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return (detail::mean_of(a) - detail::mean_of(b)) / std::sqrt(var);
}

/// Effective sample size with Geyer's initial monotone sequence estimator.
inline double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  const double mean = detail::mean_of(x);
  const double g0 = detail::autocovariance(x, mean, 0);
  if (!(g0 > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = (detail::autocovariance(x, mean, 2 * m) + detail::autocovariance(x, mean, 2 * m + 1)) / g0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  return static_cast<double>(n) / std::max(tau, 1e-12);
}

struct ScalarDiagnostics {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double geweke_z = 0.0;
  double ess = 0.0;
  bool degenerate = false;  // zero variance
};

inline ScalarDiagnostics diagnose_series(const std::string& name, std::span<const double> x) {
  if (x.size() < kMinDiagnosticDraws)
    throw DomainError("diagnostics need at least " + std::to_string(kMinDiagnosticDraws) + " draws, got " +
                      std::to_string(x.size()));
  ScalarDiagnostics d;
  d.name = name;
  d.mean = detail::mean_of(x);
  const double var = detail::autocovariance(x, d.mean, 0);
  d.sd = std::sqrt(var);
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  d.degenerate = *lo == *hi || !(var > 0.0);
  if (d.degenerate) {
    d.geweke_z = std::numeric_limits<double>::quiet_NaN();
    d.ess = std::numeric_limits<double>::quiet_NaN();
  } else {
    d.geweke_z = geweke_z(x);
    d.ess = effective_sample_size(x);
  }
  return d;
}

inline nlohmann::json to_json_value(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

inline void to_json(nlohmann::json& j, const ScalarDiagnostics& d) {
  j = nlohmann::json{{"name", d.name},
                     {"mean", to_json_value(d.mean)},
                     {"sd", to_json_value(d.sd)},
                     {"geweke_z", to_json_value(d.geweke_z)},
                     {"ess", to_json_value(d.ess)},
                     {"degenerate", d.degenerate}};
}

/// Diagnostics for the log posterior and every saved parameter.
inline std::vector<ScalarDiagnostics> diagnostics(const Chain& chain) {
  if (chain.size() < kMinDiagnosticDraws)
    throw DomainError("diagnostics need at least " + std::to_string(kMinDiagnosticDraws) + " draws, got " +
                      std::to_string(chain.size()));
  std::vector<ScalarDiagnostics> out{diagnose_series("log_posterior", chain.log_posterior)};
  const auto names = chain.parameter_names();
  std::vector<double> series(chain.size());
  for (std::size_t k = 0; k < names.size(); ++k) {
    for (std::size_t m = 0; m < chain.size(); ++m) series[m] = chain.params[m][k];
    out.push_back(diagnose_series(names[k], series));
  }
  return out;
}

}  // namespace ddpmc
