#pragma once

// Dependent stick-breaking mixture of Gaussian copulas (DDPMC) and the
// single-measure baseline with a quadratic calibration function (LDVR):
// link functions, truncated stick weights, likelihoods and priors.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ddpmc/copula.hpp"
#include "ddpmc/data.hpp"
#include "ddpmc/error.hpp"
#include "ddpmc/numerics.hpp"
#include "ddpmc/rng.hpp"

namespace ddpmc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Logistic link, kept strictly inside (0, 1).
inline double logistic(double eta) {
  const double v = eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
  return std::clamp(v, std::numeric_limits<double>::min(), 1.0 - 0x1.0p-53);
}

/// rho = 2 / (|eta| + 1) - 1, clamped away from +-1.
inline double rho_link(double eta, double eps = kRhoClampEps) {
  return clamp_rho(2.0 / (std::abs(eta) + 1.0) - 1.0, eps);
}

inline double linear_predictor(const Eigen::Ref<const Eigen::VectorXd>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& beta) {
  if (x.size() != beta.size())
    throw DomainError("dimension mismatch: design row has " + std::to_string(x.size()) +
                      " entries, coefficients " + std::to_string(beta.size()));
  return x.dot(beta);
}

inline double v_of_x(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  return logistic(linear_predictor(x, beta));
}

inline double rho_of_x(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& beta) {
  return rho_link(linear_predictor(x, beta));
}

/// Truncated stick-breaking: N - 1 sticks give N weights, the last one
/// being the remainder prod_{l<N} (1 - v_l).
inline std::vector<double> stick_weights(std::span<const double> v) {
  std::vector<double> w;
  w.reserve(v.size() + 1);
  double remaining = 1.0;
  for (double vl : v) {
    if (!(vl > 0.0 && vl < 1.0)) throw DomainError("stick_weights: stick variables must lie in (0,1)");
    w.push_back(vl * remaining);
    remaining *= 1.0 - vl;
  }
  w.push_back(remaining);
  return w;
}

/// One DDPMC state: rows of beta_v are the N - 1 stick coefficient vectors
/// (the N-th weight is the stick remainder), rows of beta_rho the N
/// correlation coefficient vectors.
struct DdpmcState {
  Eigen::MatrixXd beta_v;
  Eigen::MatrixXd beta_rho;

  std::size_t truncation() const { return static_cast<std::size_t>(beta_rho.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(beta_rho.cols()); }

  static DdpmcState zeros(std::size_t truncation, std::size_t p) {
    const auto n = static_cast<Eigen::Index>(truncation);
    const auto q = static_cast<Eigen::Index>(p);
    return {Eigen::MatrixXd::Zero(n - 1, q), Eigen::MatrixXd::Zero(n, q)};
  }

  void validate() const {
    if (beta_rho.rows() < 2) throw DomainError("DDPMC state: truncation level must be >= 2");
    if (beta_v.rows() != beta_rho.rows() - 1 || beta_v.cols() != beta_rho.cols())
      throw DomainError("DDPMC state: inconsistent coefficient shapes");
    if (!beta_v.allFinite() || !beta_rho.allFinite()) throw DomainError("DDPMC state: non-finite coefficient");
  }
};

struct LdvrState {
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  Eigen::VectorXd v;  // N - 1 stick variables
  double alpha = 1.0;

  std::size_t truncation() const { return static_cast<std::size_t>(v.size()) + 1; }

  void validate() const {
    if (v.size() < 1) throw DomainError("LDVR state: truncation level must be >= 2");
    if (!(alpha > 0.0)) throw DomainError("LDVR state: alpha must be positive");
    if (!beta.allFinite()) throw DomainError("LDVR state: non-finite coefficient");
    for (Eigen::Index j = 0; j < v.size(); ++j)
      if (!(v(j) > 0.0 && v(j) < 1.0)) throw DomainError("LDVR state: stick variables must lie in (0,1)");
  }
};

/// Multivariate normal prior with a cached Cholesky factor.
class MvnPrior {
 public:
  MvnPrior() = default;
  MvnPrior(Eigen::VectorXd mean, Eigen::MatrixXd cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
      throw ConfigError("prior: mean and covariance dimensions disagree");
    if (!cov_.isApprox(cov_.transpose(), 1e-12)) throw NumericalError("prior covariance is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    if (llt.info() != Eigen::Success) throw NumericalError("prior covariance is not positive definite");
    chol_ = llt.matrixL();
    log_det_ = 2.0 * chol_.diagonal().array().log().sum();
  }

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  const Eigen::MatrixXd& chol() const { return chol_; }
  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  Eigen::VectorXd sd() const { return cov_.diagonal().array().sqrt(); }

  double logpdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
    return -0.5 * z.squaredNorm() - 0.5 * log_det_ - static_cast<double>(mean_.size()) * kLogSqrt2Pi;
  }

  Eigen::VectorXd draw(RngStream& rng) const {
    Eigen::VectorXd z(mean_.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = rng.normal();
    return mean_ + chol_ * z;
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  double log_det_ = 0.0;
};

struct PriorSpec {
  MvnPrior v;    // beta^v_j iid
  MvnPrior rho;  // beta^rho_j iid
  MvnPrior ldvr_beta;
  double ldvr_alpha = 1.0;

  /// Mean zero, covariance scale * I for both links and the LDVR
  /// coefficients; the simulation setting uses scale 2.25 and p = 2.
  static PriorSpec isotropic(std::size_t p, double scale = 2.25, double alpha = 1.0) {
    const auto q = static_cast<Eigen::Index>(p);
    PriorSpec s;
    s.v = MvnPrior(Eigen::VectorXd::Zero(q), scale * Eigen::MatrixXd::Identity(q, q));
    s.rho = MvnPrior(Eigen::VectorXd::Zero(q), scale * Eigen::MatrixXd::Identity(q, q));
    s.ldvr_beta = MvnPrior(Eigen::VectorXd::Zero(2), scale * Eigen::MatrixXd::Identity(2, 2));
    s.ldvr_alpha = alpha;
    return s;
  }
};

/// Normal scores of the pseudo-observations, computed once per dataset.
struct ScoredData {
  Eigen::MatrixXd design;
  std::vector<double> z1;
  std::vector<double> z2;

  explicit ScoredData(const PseudoDataset& data) : design(data.design) {
    z1.reserve(data.n());
    z2.reserve(data.n());
    for (const auto& u : data.pairs) {
      require_interior(u, "pseudo-observation");
      z1.push_back(std_normal_quantile(u.u1));
      z2.push_back(std_normal_quantile(u.u2));
    }
  }

  std::size_t n() const { return z1.size(); }
};

inline MixtureOfGaussianCopulas ddpmc_mixture_at_x(const DdpmcState& state,
                                                   const Eigen::Ref<const Eigen::VectorXd>& x) {
  const std::size_t n_comp = state.truncation();
  std::vector<double> v(n_comp - 1);
  for (std::size_t j = 0; j + 1 < n_comp; ++j)
    v[j] = v_of_x(x, state.beta_v.row(static_cast<Eigen::Index>(j)).transpose());
  MixtureOfGaussianCopulas m;
  m.weights = stick_weights(v);
  m.rhos.resize(n_comp);
  for (std::size_t j = 0; j < n_comp; ++j)
    m.rhos[j] = rho_of_x(x, state.beta_rho.row(static_cast<Eigen::Index>(j)).transpose());
  return m;
}

namespace detail {

// Log stick weights from stick linear predictors; the last entry is the
// remainder.
inline void log_stick_weights(std::span<const double> eta_v, std::span<double> out) {
  double log_remaining = 0.0;
  for (std::size_t j = 0; j < eta_v.size(); ++j) {
    out[j] = log_remaining - softplus(-eta_v[j]);
    log_remaining -= softplus(eta_v[j]);
  }
  out[eta_v.size()] = log_remaining;
}

inline double log_sum_exp(std::span<const double> xs) {
  double mx = kNegInf;
  for (double x : xs) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

}  // namespace detail

inline double ddpmc_loglik(const ScoredData& data, const DdpmcState& state) {
  state.validate();
  if (static_cast<std::size_t>(data.design.cols()) != state.p())
    throw DomainError("ddpmc_loglik: design has " + std::to_string(data.design.cols()) + " columns, state p = " +
                      std::to_string(state.p()));
  const std::size_t n_comp = state.truncation();
  const Eigen::MatrixXd eta_v = data.design * state.beta_v.transpose();
  const Eigen::MatrixXd eta_rho = data.design * state.beta_rho.transpose();
  std::vector<double> ev(n_comp - 1);
  std::vector<double> terms(n_comp);
  double total = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j + 1 < n_comp; ++j) ev[j] = eta_v(r, static_cast<Eigen::Index>(j));
    detail::log_stick_weights(ev, terms);
    for (std::size_t j = 0; j < n_comp; ++j)
      terms[j] += gaussian_copula_logdensity_scores(data.z1[i], data.z2[i],
                                                    rho_link(eta_rho(r, static_cast<Eigen::Index>(j))));
    const double row = detail::log_sum_exp(terms);
    if (!std::isfinite(row)) throw NumericalError("ddpmc_loglik: non-finite value at row " + std::to_string(i));
    total += row;
  }
  return total;
}

inline double ddpmc_loglik(const PseudoDataset& data, const DdpmcState& state) {
  return ddpmc_loglik(ScoredData(data), state);
}

/// Calibration function theta(x | beta) = beta1 + beta2 x^2 on the single
/// continuous covariate (second design coordinate).
inline double ldvr_calibration(const LdvrState& state, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() < 2) throw DomainError("LDVR: design row must carry a continuous covariate");
  return state.beta(0) + state.beta(1) * x(1) * x(1);
}

inline MixtureOfGaussianCopulas ldvr_mixture_at_x(const LdvrState& state, const Eigen::Ref<const Eigen::VectorXd>& x) {
  std::vector<double> v(state.v.data(), state.v.data() + state.v.size());
  MixtureOfGaussianCopulas m;
  m.weights = stick_weights(v);
  m.rhos.assign(m.weights.size(), rho_link(ldvr_calibration(state, x)));
  return m;
}

/// All components share one correlation, so the stick weights integrate
/// out of the likelihood.
inline double ldvr_loglik(const ScoredData& data, const LdvrState& state) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double rho = rho_link(ldvr_calibration(state, data.design.row(static_cast<Eigen::Index>(i)).transpose()));
    const double term = gaussian_copula_logdensity_scores(data.z1[i], data.z2[i], rho);
    if (!std::isfinite(term)) throw NumericalError("ldvr_loglik: non-finite value at row " + std::to_string(i));
    total += term;
  }
  return total;
}

inline double ldvr_loglik(const PseudoDataset& data, const LdvrState& state) {
  return ldvr_loglik(ScoredData(data), state);
}

inline double log_prior(const DdpmcState& state, const PriorSpec& prior) {
  state.validate();
  if (prior.v.dim() != state.p() || prior.rho.dim() != state.p())
    throw DomainError("log_prior: prior dimension does not match the state");
  double total = 0.0;
  for (Eigen::Index j = 0; j < state.beta_v.rows(); ++j) total += prior.v.logpdf(state.beta_v.row(j).transpose());
  for (Eigen::Index j = 0; j < state.beta_rho.rows(); ++j)
    total += prior.rho.logpdf(state.beta_rho.row(j).transpose());
  return total;
}

/// Beta(1, alpha) log density.
inline double stick_log_prior(double v, double alpha) {
  if (!(v > 0.0 && v < 1.0)) return kNegInf;
  return std::log(alpha) + (alpha - 1.0) * std::log1p(-v);
}

inline double log_prior(const LdvrState& state, const PriorSpec& prior) {
  state.validate();
  double total = prior.ldvr_beta.logpdf(state.beta);
  for (Eigen::Index j = 0; j < state.v.size(); ++j) total += stick_log_prior(state.v(j), state.alpha);
  return total;
}

/// Incrementally maintained DDPMC log-likelihood for sweeps that update
/// components in order j = 0..N-1. Per row, the mixture splits as
///   A_j + P_j [v_j c_j + (1 - v_j) B_j]
/// with A_j the mass of components before j, P_j the remaining stick and
/// B_j the relative mixture of components after j. B is computed once per
/// sweep and A, P advance as components are committed, so each proposal
/// costs O(n) and a full sweep O(nN) on top of the proposals.
class DdpmcLikelihood {
 public:
  DdpmcLikelihood(const ScoredData& data, const DdpmcState& state) : data_(&data) { reset(state); }

  void reset(const DdpmcState& state) {
    state.validate();
    if (static_cast<std::size_t>(data_->design.cols()) != state.p())
      throw DomainError("likelihood cache: design/state dimension mismatch");
    n_comp_ = state.truncation();
    // Column by column, matching commit_*(), so a reset reproduces the
    // incrementally maintained cache bit for bit.
    eta_v_.resize(data_->design.rows(), state.beta_v.rows());
    eta_rho_.resize(data_->design.rows(), state.beta_rho.rows());
    logc_.resize(eta_rho_.rows(), eta_rho_.cols());
    for (Eigen::Index j = 0; j < state.beta_v.rows(); ++j)
      eta_v_.col(j) = data_->design * Eigen::VectorXd(state.beta_v.row(j).transpose());
    for (Eigen::Index j = 0; j < state.beta_rho.rows(); ++j) {
      eta_rho_.col(j) = data_->design * Eigen::VectorXd(state.beta_rho.row(j).transpose());
      refresh_logc(j);
    }
    begin_sweep();
  }

  std::size_t n() const { return data_->n(); }
  std::size_t cursor() const { return cursor_; }

  double total() const {
    std::vector<double> ev(n_comp_ - 1);
    std::vector<double> terms(n_comp_);
    double acc = 0.0;
    for (std::size_t i = 0; i < n(); ++i) {
      row_log_terms(i, ev, terms);
      acc += detail::log_sum_exp(terms);
    }
    return acc;
  }

  /// Recomputes the tail mixtures B_j and moves the cursor to component 0.
  void begin_sweep() {
    const Eigen::Index rows = eta_v_.rows();
    const auto last = static_cast<Eigen::Index>(n_comp_ - 1);
    log_b_.resize(rows, static_cast<Eigen::Index>(n_comp_));
    for (Eigen::Index r = 0; r < rows; ++r) {
      log_b_(r, last) = kNegInf;
      // B_{N-2} = c_{N-1}; B_j = v_{j+1} c_{j+1} + (1 - v_{j+1}) B_{j+1}.
      if (last >= 1) log_b_(r, last - 1) = logc_(r, last);
      for (Eigen::Index j = last - 2; j >= 0; --j) {
        const double e = eta_v_(r, j + 1);
        log_b_(r, j) = log_add_exp(-softplus(-e) + logc_(r, j + 1), -softplus(e) + log_b_(r, j + 1));
      }
    }
    log_a_.assign(static_cast<std::size_t>(rows), kNegInf);
    log_p_.assign(static_cast<std::size_t>(rows), 0.0);
    cursor_ = 0;
  }

  // Stick j (0 <= j < N - 1); must be the component under the cursor.
  void prepare_v(std::size_t j) {
    require_cursor(j);
    current_ = j;
  }

  double eval_v(const Eigen::Ref<const Eigen::VectorXd>& beta) const {
    const Eigen::VectorXd eta = data_->design * beta;
    const auto c = static_cast<Eigen::Index>(current_);
    double acc = 0.0;
    for (std::size_t i = 0; i < n(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double inner = log_add_exp(-softplus(-eta(r)) + logc_(r, c), -softplus(eta(r)) + log_b_(r, c));
      acc += log_add_exp(log_a_[i], log_p_[i] + inner);
    }
    return acc;
  }

  void commit_v(std::size_t j, const Eigen::Ref<const Eigen::VectorXd>& beta) {
    require_cursor(j);
    eta_v_.col(static_cast<Eigen::Index>(j)) = data_->design * beta;
  }

  // Correlation component j; must be the component under the cursor.
  void prepare_rho(std::size_t j) {
    require_cursor(j);
    const auto c = static_cast<Eigen::Index>(j);
    const bool last = j + 1 == n_comp_;
    rest_.resize(n());
    own_.resize(n());
    for (std::size_t i = 0; i < n(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (last) {
        rest_[i] = log_a_[i];
        own_[i] = log_p_[i];
      } else {
        const double e = eta_v_(r, c);
        rest_[i] = log_add_exp(log_a_[i], log_p_[i] - softplus(e) + log_b_(r, c));
        own_[i] = log_p_[i] - softplus(-e);
      }
    }
    current_ = j;
  }

  double eval_rho(const Eigen::Ref<const Eigen::VectorXd>& beta) const {
    const Eigen::VectorXd eta = data_->design * beta;
    double acc = 0.0;
    for (std::size_t i = 0; i < n(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      acc += log_add_exp(rest_[i], own_[i] + gaussian_copula_logdensity_scores(data_->z1[i], data_->z2[i],
                                                                               rho_link(eta(r))));
    }
    return acc;
  }

  /// Stores the new correlation coefficients of component j and moves the
  /// cursor past it.
  void commit_rho(std::size_t j, const Eigen::Ref<const Eigen::VectorXd>& beta) {
    require_cursor(j);
    const auto c = static_cast<Eigen::Index>(j);
    eta_rho_.col(c) = data_->design * beta;
    refresh_logc(c);
    if (j + 1 < n_comp_) {
      for (std::size_t i = 0; i < n(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double e = eta_v_(r, c);
        log_a_[i] = log_add_exp(log_a_[i], log_p_[i] - softplus(-e) + logc_(r, c));
        log_p_[i] -= softplus(e);
      }
      ++cursor_;
    } else {
      begin_sweep();
    }
  }

 private:
  void require_cursor(std::size_t j) const {
    if (j != cursor_)
      throw DomainError("likelihood cache: component " + std::to_string(j) + " updated out of order (expected " +
                        std::to_string(cursor_) + ")");
  }

  void refresh_logc(Eigen::Index j) {
    for (Eigen::Index r = 0; r < eta_rho_.rows(); ++r) {
      const auto i = static_cast<std::size_t>(r);
      logc_(r, j) = gaussian_copula_logdensity_scores(data_->z1[i], data_->z2[i], rho_link(eta_rho_(r, j)));
    }
  }

  void row_log_terms(std::size_t i, std::vector<double>& ev, std::vector<double>& terms) const {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t k = 0; k + 1 < n_comp_; ++k) ev[k] = eta_v_(r, static_cast<Eigen::Index>(k));
    detail::log_stick_weights(ev, terms);
    for (std::size_t k = 0; k < n_comp_; ++k) terms[k] += logc_(r, static_cast<Eigen::Index>(k));
  }

  const ScoredData* data_;
  std::size_t n_comp_ = 0;
  std::size_t current_ = 0;
  Eigen::MatrixXd eta_v_;
  Eigen::MatrixXd eta_rho_;
  Eigen::MatrixXd logc_;
  Eigen::MatrixXd log_b_;
  std::vector<double> log_a_;
  std::vector<double> log_p_;
  std::size_t cursor_ = 0;
  std::vector<double> rest_;
  std::vector<double> own_;
};

/// Result of the prior-predictive search for a common g-prior scale.
struct GpriorCalibration {
  double c = 0.0;
  double lower = 0.0;  // achieved lower quantile of the induced link value
  double upper = 0.0;  // achieved upper quantile
};

enum class Link { kStick, kCorrelation };

/// Largest c such that, with coefficients drawn from N(0, c * Sigma1), the
/// `tail` and `1 - tail` empirical quantiles of the induced stick variables
/// (or correlations) over the observed design rows stay inside [lo, hi].
/// Because beta(c) = sqrt(c) * beta(1) under common random numbers, the
/// linear-predictor quantiles scale with sqrt(c) and the bound is solved
/// exactly instead of by bisection.
inline GpriorCalibration calibrate_gprior_scale(const Eigen::MatrixXd& design, const Eigen::MatrixXd& unit_cov,
                                                Link link, double lo, double hi, RngStream& rng,
                                                std::size_t draws = 2000, double tail = 0.025) {
  if (!(tail > 0.0 && tail < 0.5)) throw ConfigError("g-prior calibration: tail must lie in (0, 0.5)");
  if (!(lo < hi)) throw ConfigError("g-prior calibration: empty target range");
  const MvnPrior unit(Eigen::VectorXd::Zero(unit_cov.rows()), unit_cov);
  std::vector<double> etas;
  etas.reserve(draws * static_cast<std::size_t>(design.rows()));
  for (std::size_t d = 0; d < draws; ++d) {
    const Eigen::VectorXd eta = design * unit.draw(rng);
    etas.insert(etas.end(), eta.data(), eta.data() + eta.size());
  }
  GpriorCalibration out;
  if (link == Link::kStick) {
    if (!(lo > 0.0 && hi < 1.0)) throw ConfigError("g-prior calibration: stick range must lie in (0,1)");
    if (!(lo < 0.5 && hi > 0.5)) throw ConfigError("g-prior calibration: target range excludes v = 1/2");
    const double q_lo = sample_quantile_type8(etas, tail);
    const double q_hi = sample_quantile_type8(etas, 1.0 - tail);
    const double eta_lo = std::log(lo / (1.0 - lo));
    const double eta_hi = std::log(hi / (1.0 - hi));
    double c = std::numeric_limits<double>::infinity();
    if (q_lo < 0.0 && eta_lo < 0.0) c = std::min(c, std::pow(eta_lo / q_lo, 2));
    if (q_hi > 0.0 && eta_hi > 0.0) c = std::min(c, std::pow(eta_hi / q_hi, 2));
    if (!std::isfinite(c)) throw NumericalError("g-prior calibration: degenerate linear predictors");
    out.c = c;
    out.lower = logistic(std::sqrt(c) * q_lo);
    out.upper = logistic(std::sqrt(c) * q_hi);
  } else {
    // rho >= lo  <=>  |eta| <= 2 / (1 + lo) - 1; the upper bound only binds below 1.
    if (!(lo > -1.0)) throw ConfigError("g-prior calibration: correlation lower bound must exceed -1");
    for (double& e : etas) e = std::abs(e);
    const double q_abs = sample_quantile_type8(etas, 1.0 - tail);
    const double q_small = sample_quantile_type8(etas, tail);
    double c = std::pow((2.0 / (1.0 + lo) - 1.0) / q_abs, 2);
    if (hi < 1.0) {
      const double need = 2.0 / (1.0 + hi) - 1.0;  // |eta| must exceed this
      if (q_small * std::sqrt(c) < need) throw ConfigError("g-prior calibration: correlation range infeasible");
    }
    out.c = c;
    out.lower = 2.0 / (std::sqrt(c) * q_abs + 1.0) - 1.0;
    out.upper = std::min(1.0, 2.0 / (std::sqrt(c) * q_small + 1.0) - 1.0);
  }
  return out;
}

}  // namespace ddpmc
