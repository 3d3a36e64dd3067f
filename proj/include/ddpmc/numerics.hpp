#pragma once

// Special functions used by every density, quantile and sampler in the
// library. All functions are pure and thread-safe.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "ddpmc/error.hpp"

namespace ddpmc {

inline constexpr double kSqrt2 = std::numbers::sqrt2;
inline constexpr double kSqrt2Pi = 2.50662827463100050242;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double std_normal_logpdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

inline double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / kSqrt2Pi; }

inline double std_normal_cdf(double z) {
  if (!std::isfinite(z)) throw DomainError("std_normal_cdf: non-finite argument");
  return 0.5 * std::erfc(-z / kSqrt2);
}

namespace detail {

// Acklam's rational approximation to the normal quantile (relative error
// about 1.15e-9 before refinement).
inline double acklam_quantile(double p) {
  static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02,
                                           -2.759285104469687e+02, 1.383577518672690e+02,
                                           -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02,
                                           -1.556989798598866e+02, 6.680131188771972e+01,
                                           -1.328068155288572e+01};
  static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01,
                                           -2.400758277161838e+00, -2.549732539343734e+00,
                                           4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01,
                                           2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  auto tail = [&](double q) {
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  };
  if (p < p_low) return tail(std::sqrt(-2.0 * std::log(p)));
  if (p > 1.0 - p_low) return -tail(std::sqrt(-2.0 * std::log1p(-p)));
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

/// Inverse of the standard normal CDF: rational approximation followed by
/// one Halley step against std_normal_cdf.
inline double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("std_normal_quantile: p must lie in (0,1)");
  double x = detail::acklam_quantile(p);
  // Upper half: compare tails, since 1 - p is exact there and Phi(x) - p
  // would cancel.
  const double e = p > 0.5 ? (1.0 - p) - 0.5 * std::erfc(x / kSqrt2) : 0.5 * std::erfc(-x / kSqrt2) - p;
  const double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

namespace detail {

struct GaussLegendre {
  int n;
  std::array<double, 10> x;
  std::array<double, 10> w;
};

// Half-rules (negative abscissae) for 6, 12 and 20 points.
inline constexpr std::array<GaussLegendre, 3> kBvnRules{{
    {3,
     {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970},
     {0.1713244923791705, 0.3607615730481384, 0.4679139345726904}},
    {6,
     {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050, -0.5873179542866171,
      -0.3678314989981802, -0.1252334085114692},
     {0.04717533638651177, 0.1069393259953183, 0.1600783285433464, 0.2031674267230659,
      0.2334925365383547, 0.2491470458134029}},
    {10,
     {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259, -0.8391169718222188,
      -0.7463319064601508, -0.6360536807265150, -0.5108670019508271, -0.3737060887154196,
      -0.2277858511416451, -0.07652652113349733},
     {0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
      0.1019301198172404, 0.1181945319615184, 0.1316886384491766, 0.1420961093183821,
      0.1491729864726037, 0.1527533871307259}},
}};

// Upper orthant probability P(X > h, Y > k) for a standard bivariate normal
// with correlation r (Drezner-Wesolowsky with Genz's refinements).
inline double bvn_upper(double h, double k, double r) {
  const GaussLegendre& gl =
      std::abs(r) < 0.3 ? kBvnRules[0] : (std::abs(r) < 0.75 ? kBvnRules[1] : kBvnRules[2]);
  auto phi = [](double z) { return 0.5 * std::erfc(-z / kSqrt2); };

  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = std::asin(r);
    for (int i = 0; i < gl.n; ++i) {
      double sn = std::sin(asr * (gl.x[i] + 1.0) / 2.0);
      bvn += gl.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      sn = std::sin(asr * (-gl.x[i] + 1.0) / 2.0);
      bvn += gl.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return bvn * asr / (2.0 * kTwoPi) + phi(-h) * phi(-k);
  }

  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    bvn = a * std::exp(-(bs / as + hk) / 2.0) *
          (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (hk > -160.0) {
      const double b = std::sqrt(bs);
      bvn -= std::exp(-hk / 2.0) * kSqrt2Pi * phi(-b / a) * b *
             (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (int i = 0; i < gl.n; ++i) {
      double xs = a * (gl.x[i] + 1.0);
      xs *= xs;
      double rs = std::sqrt(1.0 - xs);
      bvn += a * gl.w[i] *
             (std::exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs -
              std::exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs)));
      xs = as * (-gl.x[i] + 1.0) * (-gl.x[i] + 1.0) / 4.0;
      rs = std::sqrt(1.0 - xs);
      bvn += a * gl.w[i] * std::exp(-(bs / xs + hk) / 2.0) *
             (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
              (1.0 + c * xs * (1.0 + d * xs)));
    }
    bvn = -bvn / kTwoPi;
  }
  if (r > 0.0) return bvn + phi(-std::max(h, k));
  return -bvn + std::max(0.0, phi(-h) - phi(-k));
}

}  // namespace detail

/// P(Z1 <= z1, Z2 <= z2) for a standard bivariate normal with correlation rho.
inline double bivariate_normal_cdf(double z1, double z2, double rho) {
  if (!(std::abs(rho) < 1.0)) throw DomainError("bivariate_normal_cdf: |rho| must be < 1");
  if (std::isnan(z1) || std::isnan(z2)) throw DomainError("bivariate_normal_cdf: NaN argument");
  if (z1 == -std::numeric_limits<double>::infinity() ||
      z2 == -std::numeric_limits<double>::infinity())
    return 0.0;
  if (std::isinf(z1)) return 0.5 * std::erfc(-z2 / kSqrt2);
  if (std::isinf(z2)) return 0.5 * std::erfc(-z1 / kSqrt2);
  // Fixed argument order makes the result exactly symmetric.
  if (z1 > z2) std::swap(z1, z2);
  const double p = detail::bvn_upper(-z1, -z2, rho);
  return std::clamp(p, 0.0, 1.0);
}

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b). Takes x and 1 - x separately so
/// callers can avoid cancellation near x = 1.
inline double regularized_incomplete_beta(double a, double b, double x, double one_minus_x) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete beta: x must lie in [0,1]");
  if (x == 0.0) return 0.0;
  if (one_minus_x == 0.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log(one_minus_x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, one_minus_x) / b;
}

inline double regularized_incomplete_beta(double a, double b, double x) {
  return regularized_incomplete_beta(a, b, x, 1.0 - x);
}

namespace detail {

// P(|T| < t) for integer degrees of freedom via the finite trigonometric
// series for the t distribution.
inline double student_t_central_integer(double t, int nu) {
  const double theta = std::atan(std::abs(t) / std::sqrt(static_cast<double>(nu)));
  const double s = std::sin(theta);
  const double c2 = std::cos(theta) * std::cos(theta);
  if (nu % 2 == 1) {
    if (nu == 1) return 2.0 * theta / std::numbers::pi;
    double term = 1.0;
    double sum = 1.0;
    for (int k = 2; k <= nu - 3; k += 2) {
      term *= c2 * static_cast<double>(k) / static_cast<double>(k + 1);
      sum += term;
    }
    return 2.0 / std::numbers::pi * (theta + s * std::cos(theta) * sum);
  }
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= nu - 3; k += 2) {
    term *= c2 * static_cast<double>(k) / static_cast<double>(k + 1);
    sum += term;
  }
  return s * sum;
}

}  // namespace detail

inline double student_t_cdf(double t, double nu) {
  if (!(nu > 0.0)) throw DomainError("student_t_cdf: nu must be positive");
  if (std::isnan(t)) throw DomainError("student_t_cdf: NaN argument");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  if (t == 0.0) return 0.5;
  // Small integer df: closed form, used heavily by the t-copula sampler.
  // The lower tail goes through the incomplete beta to keep relative accuracy.
  if (nu <= 30.0 && nu == std::floor(nu) && t > -1.0) {
    const double central = detail::student_t_central_integer(t, static_cast<int>(nu));
    return t > 0.0 ? 0.5 + 0.5 * central : 0.5 - 0.5 * central;
  }
  const double t2 = t * t;
  const double x = nu / (nu + t2);
  const double tail = 0.5 * regularized_incomplete_beta(0.5 * nu, 0.5, x, t2 / (nu + t2));
  return t > 0.0 ? 1.0 - tail : tail;
}

inline double student_t_logpdf(double t, double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi) -
         0.5 * (nu + 1.0) * std::log1p(t * t / nu);
}

/// Inverse of student_t_cdf by safeguarded Newton iteration.
inline double student_t_quantile(double p, double nu) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("student_t_quantile: p must lie in (0,1)");
  if (!(nu > 0.0)) throw DomainError("student_t_quantile: nu must be positive");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -student_t_quantile(1.0 - p, nu);
  // Bracket: the t quantile exceeds the normal one for p > 1/2.
  double lo = 0.0;
  double hi = std::max(1.0, std_normal_quantile(p));
  while (student_t_cdf(hi, nu) < p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) return hi;
  }
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const double f = student_t_cdf(x, nu) - p;
    if (f > 0) hi = x; else lo = x;
    double next = x - f / std::exp(student_t_logpdf(x, nu));
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-14 * std::max(1.0, std::abs(x))) return next;
    x = next;
  }
  return x;
}

/// log(exp(a) + exp(b)) without overflow.
inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

}  // namespace ddpmc
