#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>

#include "ddpmc/error.hpp"
#include "ddpmc/rng.hpp"

namespace ddpmc {

struct SliceOptions {
  std::size_t max_step_outs = 0;  // per coordinate; 0 keeps the initial box
  std::size_t max_shrinks = 1000;
};

struct SliceResult {
  Eigen::VectorXd x;
  double log_target = 0.0;
  std::size_t evaluations = 0;
};

/// One multivariate slice-sampling update with an axis-aligned
/// hyperrectangle: auxiliary level below log_target(current), a randomly
/// placed box of the given widths, then shrinkage toward `current` until a
/// point inside the slice is found.
template <class LogTarget>
SliceResult slice_update_vector(LogTarget&& log_target, const Eigen::VectorXd& current,
                                const Eigen::VectorXd& widths, RngStream& rng, double current_log_target,
                                const SliceOptions& options = {}) {
  const Eigen::Index d = current.size();
  if (widths.size() != d) throw ConfigError("slice sampler: one width per coordinate required");
  for (Eigen::Index k = 0; k < d; ++k)
    if (!(widths(k) > 0.0) || !std::isfinite(widths(k)))
      throw ConfigError("slice sampler: widths must be positive and finite");
  if (!std::isfinite(current_log_target))
    throw NumericalError("slice sampler: log target is not finite at the current point");

  const double level = current_log_target - rng.exponential();
  Eigen::VectorXd lo(d);
  Eigen::VectorXd hi(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    lo(k) = current(k) - widths(k) * rng.uniform();
    hi(k) = lo(k) + widths(k);
  }

  SliceResult out{current, current_log_target, 0};
  if (options.max_step_outs > 0) {
    Eigen::VectorXd probe = current;
    for (Eigen::Index k = 0; k < d; ++k) {
      for (std::size_t s = 0; s < options.max_step_outs; ++s) {
        probe(k) = lo(k);
        ++out.evaluations;
        if (!(log_target(probe) > level)) break;
        lo(k) -= widths(k);
      }
      for (std::size_t s = 0; s < options.max_step_outs; ++s) {
        probe(k) = hi(k);
        ++out.evaluations;
        if (!(log_target(probe) > level)) break;
        hi(k) += widths(k);
      }
      probe(k) = current(k);
    }
  }

  Eigen::VectorXd proposal(d);
  for (std::size_t attempt = 0; attempt < options.max_shrinks; ++attempt) {
    for (Eigen::Index k = 0; k < d; ++k) proposal(k) = lo(k) + (hi(k) - lo(k)) * rng.uniform();
    const double value = log_target(proposal);
    ++out.evaluations;
    if (value > level && std::isfinite(value)) {
      out.x = proposal;
      out.log_target = value;
      return out;
    }
    for (Eigen::Index k = 0; k < d; ++k) {
      if (proposal(k) < current(k))
        lo(k) = proposal(k);
      else
        hi(k) = proposal(k);
    }
  }
  // The box has collapsed onto the current point.
  return out;
}

template <class LogTarget>
SliceResult slice_update_vector(LogTarget&& log_target, const Eigen::VectorXd& current,
                                const Eigen::VectorXd& widths, RngStream& rng,
                                const SliceOptions& options = {}) {
  const double f0 = log_target(current);
  return slice_update_vector(log_target, current, widths, rng, f0, options);
}

}  // namespace ddpmc
