#pragma once

// Bivariate copula families (Gaussian, Student-t, Gumbel): densities, CDFs,
// samplers and Kendall's tau identities.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ddpmc/error.hpp"
#include "ddpmc/numerics.hpp"
#include "ddpmc/rng.hpp"

namespace ddpmc {

/// Correlations are kept inside [-1 + eps, 1 - eps] wherever a Gaussian
/// copula density or CDF is evaluated.
inline constexpr double kRhoClampEps = 1e-6;

inline double clamp_rho(double rho, double eps = kRhoClampEps) {
  return std::clamp(rho, -1.0 + eps, 1.0 - eps);
}

struct UnitPair {
  double u1 = 0.5;
  double u2 = 0.5;

  bool interior() const { return u1 > 0.0 && u1 < 1.0 && u2 > 0.0 && u2 < 1.0; }
};

inline void require_interior(const UnitPair& u, const char* where) {
  if (!u.interior()) throw DomainError(std::string(where) + ": point must lie strictly inside (0,1)^2");
}

/// Log Gaussian copula density on the normal scores z = (Phi^-1(u1), Phi^-1(u2)).
/// rho must already be clamped.
inline double gaussian_copula_logdensity_scores(double z1, double z2, double rho) {
  const double one_minus_r2 = (1.0 - rho) * (1.0 + rho);
  const double q = (rho * rho * (z1 * z1 + z2 * z2) - 2.0 * rho * z1 * z2) / one_minus_r2;
  return -0.5 * std::log(one_minus_r2) - 0.5 * q;
}

inline double gaussian_copula_logdensity(const UnitPair& u, double rho) {
  require_interior(u, "gaussian_copula_logdensity");
  return gaussian_copula_logdensity_scores(std_normal_quantile(u.u1), std_normal_quantile(u.u2),
                                           clamp_rho(rho));
}

inline double gaussian_copula_cdf(const UnitPair& u, double rho) {
  require_interior(u, "gaussian_copula_cdf");
  return bivariate_normal_cdf(std_normal_quantile(u.u1), std_normal_quantile(u.u2), clamp_rho(rho));
}

inline double t_copula_logdensity(const UnitPair& u, double rho, double nu) {
  require_interior(u, "t_copula_logdensity");
  if (!(nu > 0.0)) throw DomainError("t_copula_logdensity: nu must be positive");
  rho = clamp_rho(rho);
  const double t1 = student_t_quantile(u.u1, nu);
  const double t2 = student_t_quantile(u.u2, nu);
  const double one_minus_r2 = (1.0 - rho) * (1.0 + rho);
  const double quad = (t1 * t1 - 2.0 * rho * t1 * t2 + t2 * t2) / (nu * one_minus_r2);
  const double log_joint = std::lgamma(0.5 * (nu + 2.0)) - std::lgamma(0.5 * nu) -
                           std::log(nu * std::numbers::pi) - 0.5 * std::log(one_minus_r2) -
                           0.5 * (nu + 2.0) * std::log1p(quad);
  return log_joint - student_t_logpdf(t1, nu) - student_t_logpdf(t2, nu);
}

inline double gumbel_copula_cdf(const UnitPair& u, double alpha) {
  require_interior(u, "gumbel_copula_cdf");
  if (!(alpha >= 1.0)) throw DomainError("gumbel copula: alpha must be >= 1");
  const double a = std::pow(-std::log(u.u1), alpha) + std::pow(-std::log(u.u2), alpha);
  return std::exp(-std::pow(a, 1.0 / alpha));
}

inline double gumbel_copula_logdensity(const UnitPair& u, double alpha) {
  require_interior(u, "gumbel_copula_logdensity");
  if (!(alpha >= 1.0)) throw DomainError("gumbel copula: alpha must be >= 1");
  const double lx = std::log(-std::log(u.u1));
  const double ly = std::log(-std::log(u.u2));
  // log A with A = x^alpha + y^alpha, computed in log space.
  const double log_a = log_add_exp(alpha * lx, alpha * ly);
  const double m = std::exp(log_a / alpha);
  return -m + (alpha - 1.0) * (lx + ly) - std::log(u.u1) - std::log(u.u2) +
         (1.0 / alpha - 2.0) * log_a + std::log(m + alpha - 1.0);
}

/// Kendall's tau of any elliptical copula with correlation rho.
inline double elliptical_tau(double rho) {
  if (!(std::abs(rho) <= 1.0)) throw DomainError("elliptical_tau: |rho| must be <= 1");
  return 2.0 / std::numbers::pi * std::asin(rho);
}

inline double gumbel_tau(double alpha) {
  if (!(alpha >= 1.0)) throw DomainError("gumbel_tau: alpha must be >= 1");
  return 1.0 - 1.0 / alpha;
}

/// A finite mixture of Gaussian copulas at a fixed covariate value.
struct MixtureOfGaussianCopulas {
  std::vector<double> weights;
  std::vector<double> rhos;

  void validate() const {
    if (weights.size() != rhos.size() || weights.empty())
      throw DomainError("mixture: weights and rhos must be nonempty and of equal length");
    double total = 0.0;
    for (std::size_t j = 0; j < weights.size(); ++j) {
      if (!(weights[j] >= 0.0)) throw DomainError("mixture: negative weight");
      if (!(std::abs(rhos[j]) < 1.0)) throw DomainError("mixture: |rho| must be < 1");
      total += weights[j];
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("mixture: weights do not sum to one");
  }

  double logdensity(const UnitPair& u) const {
    require_interior(u, "mixture logdensity");
    const double z1 = std_normal_quantile(u.u1);
    const double z2 = std_normal_quantile(u.u2);
    double acc = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < weights.size(); ++j) {
      if (weights[j] == 0.0) continue;
      acc = log_add_exp(acc, std::log(weights[j]) +
                                 gaussian_copula_logdensity_scores(z1, z2, clamp_rho(rhos[j])));
    }
    return acc;
  }
};

/// Closed-form Kendall's tau of a Gaussian copula mixture:
/// (2/pi) sum_i sum_j w_i w_j asin((rho_i + rho_j) / 2).
inline double mixture_tau(const MixtureOfGaussianCopulas& m) {
  m.validate();
  const std::size_t k = m.weights.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (m.weights[i] == 0.0) continue;
    acc += m.weights[i] * m.weights[i] * std::asin(m.rhos[i]);
    for (std::size_t j = i + 1; j < k; ++j)
      acc += 2.0 * m.weights[i] * m.weights[j] * std::asin(0.5 * (m.rhos[i] + m.rhos[j]));
  }
  return std::clamp(2.0 / std::numbers::pi * acc, -1.0, 1.0);
}

namespace detail {

inline double to_open_unit(double p) {
  constexpr double kLo = 0x1.0p-60;
  constexpr double kHi = 1.0 - 0x1.0p-53;
  return std::clamp(p, kLo, kHi);
}

}  // namespace detail

inline UnitPair sample_gaussian_copula(double rho, RngStream& rng) {
  if (!(std::abs(rho) < 1.0)) throw DomainError("sample_gaussian_copula: |rho| must be < 1");
  const double z1 = rng.normal();
  const double z2 = rho * z1 + std::sqrt((1.0 - rho) * (1.0 + rho)) * rng.normal();
  return {detail::to_open_unit(0.5 * std::erfc(-z1 / kSqrt2)),
          detail::to_open_unit(0.5 * std::erfc(-z2 / kSqrt2))};
}

inline UnitPair sample_t_copula(double rho, double nu, RngStream& rng) {
  if (!(std::abs(rho) < 1.0)) throw DomainError("sample_t_copula: |rho| must be < 1");
  if (!(nu > 0.0)) throw DomainError("sample_t_copula: nu must be positive");
  const double z1 = rng.normal();
  const double z2 = rho * z1 + std::sqrt((1.0 - rho) * (1.0 + rho)) * rng.normal();
  const double scale = 1.0 / std::sqrt(rng.chi_square(nu) / nu);
  return {detail::to_open_unit(student_t_cdf(z1 * scale, nu)),
          detail::to_open_unit(student_t_cdf(z2 * scale, nu))};
}

/// Marshall-Olkin sampler: positive-stable(1/alpha) frailty from the
/// Chambers-Mallows-Stuck (Kanter) representation, then U_i = psi(E_i / S)
/// with generator psi(t) = exp(-t^(1/alpha)).
inline UnitPair sample_gumbel_copula(double alpha, RngStream& rng) {
  if (!(alpha >= 1.0)) throw DomainError("sample_gumbel_copula: alpha must be >= 1");
  const double theta = 1.0 / alpha;
  double frailty = 1.0;
  if (theta < 1.0) {
    const double angle = std::numbers::pi * rng.uniform();
    const double w = rng.exponential();
    frailty = std::sin(theta * angle) / std::pow(std::sin(angle), 1.0 / theta) *
              std::pow(std::sin((1.0 - theta) * angle) / w, (1.0 - theta) / theta);
  }
  const double e1 = rng.exponential();
  const double e2 = rng.exponential();
  return {detail::to_open_unit(std::exp(-std::pow(e1 / frailty, theta))),
          detail::to_open_unit(std::exp(-std::pow(e2 / frailty, theta)))};
}

namespace detail {

inline std::int64_t count_tied_pairs(std::span<const double> sorted) {
  std::int64_t total = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    total += t * (t - 1) / 2;
    i = j;
  }
  return total;
}

// Merge sort that returns the number of inversions.
inline std::int64_t sort_count_swaps(std::vector<double>& v, std::vector<double>& scratch,
                                     std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = sort_count_swaps(v, scratch, lo, mid) + sort_count_swaps(v, scratch, mid, hi);
  std::size_t i = lo;
  std::size_t j = mid;
  std::size_t k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      scratch[k++] = v[j++];
    } else {
      scratch[k++] = v[i++];
    }
  }
  while (i < mid) scratch[k++] = v[i++];
  while (j < hi) scratch[k++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo),
            scratch.begin() + static_cast<std::ptrdiff_t>(hi), v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace detail

/// Sample Kendall's tau-b in O(n log n) (Knight's algorithm).
inline double empirical_kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DomainError("empirical_kendall_tau: need two equal-length samples of size >= 2");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  std::vector<double> xs(n);
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }
  const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t n1 = detail::count_tied_pairs(xs);
  std::int64_t n3 = 0;
  {
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i + 1;
      while (j < n && xs[j] == xs[i] && ys[j] == ys[i]) ++j;
      const auto t = static_cast<std::int64_t>(j - i);
      n3 += t * (t - 1) / 2;
      i = j;
    }
  }
  std::vector<double> scratch(n);
  const std::int64_t swaps = detail::sort_count_swaps(ys, scratch, 0, n);
  const std::int64_t n2 = detail::count_tied_pairs(ys);
  const double numer = static_cast<double>(n0 - n1 - n2 + n3 - 2 * swaps);
  const double denom = std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
  if (denom == 0.0) return 0.0;
  return numer / denom;
}

}  // namespace ddpmc
