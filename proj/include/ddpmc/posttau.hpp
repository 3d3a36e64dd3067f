#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ddpmc/copula.hpp"
#include "ddpmc/data.hpp"
#include "ddpmc/error.hpp"
#include "ddpmc/mcmc.hpp"
#include "ddpmc/model.hpp"
#include "ddpmc/numerics.hpp"

namespace ddpmc {

inline double tau_at_x(const DdpmcState& state, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return mixture_tau(ddpmc_mixture_at_x(state, x));
}

/// LDVR components share one correlation, so tau reduces to the
/// elliptical value of that correlation.
inline double tau_at_x(const LdvrState& state, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return elliptical_tau(rho_link(ldvr_calibration(state, x)));
}

/// A covariate point: original-scale coordinates plus its design row.
struct GridPoint {
  std::vector<double> continuous;              // schema order
  std::map<std::string, std::string> labels;   // categorical name -> level
  Eigen::VectorXd row;
};

/// Section grid: one continuous covariate varies over an even grid, the
/// other continuous covariates take each listed value, and every
/// categorical takes each listed level (all levels when not listed).
struct SectionGridSpec {
  std::string vary;
  double from = 0.0;
  double to = 1.0;
  std::size_t points = 100;
  std::map<std::string, std::vector<double>> fixed;
  std::map<std::string, std::vector<std::string>> levels;
};

inline void from_json(const nlohmann::json& j, SectionGridSpec& g) {
  const auto& v = j.at("vary");
  g.vary = v.at("name").get<std::string>();
  g.from = v.at("from").get<double>();
  g.to = v.at("to").get<double>();
  g.points = v.value("points", std::size_t{100});
  g.fixed = j.value("fixed", std::map<std::string, std::vector<double>>{});
  g.levels = j.value("levels", std::map<std::string, std::vector<std::string>>{});
}

inline void to_json(nlohmann::json& j, const SectionGridSpec& g) {
  j = nlohmann::json{{"vary", {{"name", g.vary}, {"from", g.from}, {"to", g.to}, {"points", g.points}}},
                     {"fixed", g.fixed},
                     {"levels", g.levels}};
}

inline std::vector<GridPoint> build_section_grid(const DesignEncoder& encoder, const SectionGridSpec& spec) {
  const auto& schema = encoder.schema();
  if (spec.points == 0) throw ConfigError("grid: at least one point required");
  const auto vary_it = std::find(schema.continuous.begin(), schema.continuous.end(), spec.vary);
  if (vary_it == schema.continuous.end())
    throw ConfigError("grid: '" + spec.vary + "' is not a continuous covariate");
  const auto vary_col = static_cast<std::size_t>(vary_it - schema.continuous.begin());

  // Each axis lists its candidate values; the grid is their product with
  // the varying covariate innermost.
  std::vector<std::vector<double>> cont_axes(schema.continuous.size());
  for (std::size_t k = 0; k < schema.continuous.size(); ++k) {
    if (k == vary_col) {
      for (std::size_t l = 0; l < spec.points; ++l)
        cont_axes[k].push_back(spec.points == 1 ? spec.from
                                                : spec.from + (spec.to - spec.from) * static_cast<double>(l) /
                                                                  static_cast<double>(spec.points - 1));
      continue;
    }
    const auto it = spec.fixed.find(schema.continuous[k]);
    if (it == spec.fixed.end() || it->second.empty())
      throw ConfigError("grid: no fixed value for continuous covariate '" + schema.continuous[k] + "'");
    cont_axes[k] = it->second;
  }
  for (const auto& [name, _] : spec.fixed)
    if (std::find(schema.continuous.begin(), schema.continuous.end(), name) == schema.continuous.end())
      throw ConfigError("grid: '" + name + "' is not a continuous covariate");

  const auto cats = schema.all_categoricals();
  std::vector<std::vector<std::string>> cat_axes;
  for (const auto& c : cats) {
    const auto it = spec.levels.find(c.name);
    cat_axes.push_back(it == spec.levels.end() ? c.levels : it->second);
    for (const auto& lv : cat_axes.back())
      if (std::find(c.levels.begin(), c.levels.end(), lv) == c.levels.end())
        throw ConfigError("grid: unknown level '" + lv + "' for '" + c.name + "'");
  }

  // Axis order: categoricals, then continuous in schema order with the
  // varying one moved last.
  std::vector<std::size_t> sizes;
  for (const auto& a : cat_axes) sizes.push_back(a.size());
  std::vector<std::size_t> cont_order;
  for (std::size_t k = 0; k < cont_axes.size(); ++k)
    if (k != vary_col) cont_order.push_back(k);
  cont_order.push_back(vary_col);
  for (std::size_t k : cont_order) sizes.push_back(cont_axes[k].size());

  std::size_t total = 1;
  for (std::size_t s : sizes) total *= s;
  std::vector<GridPoint> grid;
  grid.reserve(total);
  std::vector<std::size_t> idx(sizes.size(), 0);
  for (std::size_t g = 0; g < total; ++g) {
    GridPoint pt;
    pt.continuous.resize(cont_axes.size());
    for (std::size_t a = 0; a < cats.size(); ++a) pt.labels[cats[a].name] = cat_axes[a][idx[a]];
    for (std::size_t a = 0; a < cont_order.size(); ++a)
      pt.continuous[cont_order[a]] = cont_axes[cont_order[a]][idx[cats.size() + a]];
    pt.row = encoder.encode(pt.continuous, pt.labels);
    grid.push_back(std::move(pt));
    for (std::size_t a = sizes.size(); a-- > 0;) {
      if (++idx[a] < sizes[a]) break;
      idx[a] = 0;
    }
  }
  return grid;
}

/// Grid over a single continuous covariate given in original units.
inline std::vector<GridPoint> covariate_grid(const DesignEncoder& encoder, const std::vector<double>& values) {
  if (encoder.schema().continuous.size() != 1 || !encoder.schema().all_categoricals().empty())
    throw ConfigError("covariate_grid: design must have exactly one continuous covariate");
  std::vector<GridPoint> grid;
  for (double v : values) {
    GridPoint pt;
    pt.continuous = {v};
    pt.row = encoder.encode(pt.continuous, {});
    grid.push_back(std::move(pt));
  }
  return grid;
}

/// Posterior draws of tau at each grid point: result[g][m].
inline std::vector<std::vector<double>> tau_draws(const Chain& chain, const std::vector<GridPoint>& grid,
                                                  unsigned threads = 0) {
  if (chain.size() == 0) throw DomainError("tau: chain has no draws");
  if (grid.empty()) throw DomainError("tau: grid is empty");
  for (const auto& pt : grid)
    if (static_cast<std::size_t>(pt.row.size()) != chain.p)
      throw ConfigError("tau: grid rows have " + std::to_string(pt.row.size()) + " columns, chain expects " +
                        std::to_string(chain.p));
  std::vector<DdpmcState> dd;
  std::vector<LdvrState> ld;
  for (std::size_t m = 0; m < chain.size(); ++m) {
    if (chain.model == ModelKind::kDdpmc)
      dd.push_back(chain.ddpmc_state(m));
    else
      ld.push_back(chain.ldvr_state(m));
  }
  std::vector<std::vector<double>> out(grid.size(), std::vector<double>(chain.size()));
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t g = begin; g < grid.size(); g += step)
      for (std::size_t m = 0; m < chain.size(); ++m)
        out[g][m] = chain.model == ModelKind::kDdpmc ? tau_at_x(dd[m], grid[g].row) : tau_at_x(ld[m], grid[g].row);
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, grid.size()));
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& t : pool) t.join();
  }
  return out;
}

/// Sample quantile with linear interpolation between order statistics
/// (type 7). `sorted` must be ascending.
inline double sorted_quantile(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw DomainError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct TauCurve {
  std::vector<GridPoint> grid;
  std::vector<double> median;
  std::vector<double> lower;
  std::vector<double> upper;
  double level = 0.95;
};

inline TauCurve summarize_tau_draws(std::vector<GridPoint> grid, std::vector<std::vector<double>> draws,
                                    double level) {
  if (!(level >= 0.0 && level < 1.0)) throw ConfigError("tau: band level must lie in [0, 1)");
  if (draws.size() != grid.size()) throw DomainError("tau: one draw vector per grid point required");
  TauCurve c;
  c.level = level;
  const double tail = 0.5 * (1.0 - level);
  for (auto& d : draws) {
    std::sort(d.begin(), d.end());
    c.median.push_back(sorted_quantile(d, 0.5));
    c.lower.push_back(sorted_quantile(d, tail));
    c.upper.push_back(sorted_quantile(d, 1.0 - tail));
  }
  c.grid = std::move(grid);
  return c;
}

/// Pointwise posterior median of tau and the central band at `level`.
inline TauCurve tau_curve(const Chain& chain, const std::vector<GridPoint>& grid, double level) {
  return summarize_tau_draws(grid, tau_draws(chain, grid), level);
}

/// Average absolute difference of two curves over a common grid.
inline double integrated_l1(const std::vector<double>& tau_hat, const std::vector<double>& tau_true) {
  if (tau_hat.empty() || tau_hat.size() != tau_true.size())
    throw DomainError("integrated_l1: curves must be nonempty and of equal length (" +
                      std::to_string(tau_hat.size()) + " vs " + std::to_string(tau_true.size()) + ")");
  double acc = 0.0;
  for (std::size_t l = 0; l < tau_hat.size(); ++l) acc += std::abs(tau_hat[l] - tau_true[l]);
  return acc / static_cast<double>(tau_hat.size());
}

/// tau divided by its null standard deviation sqrt(2(2n+5) / (9n(n-1))).
inline double tau_test_statistic(double tau, std::size_t n) {
  if (n < 2) throw DomainError("tau_test_statistic: n must be at least 2");
  const auto nd = static_cast<double>(n);
  return tau / std::sqrt(2.0 * (2.0 * nd + 5.0) / (9.0 * nd * (nd - 1.0)));
}

/// Fraction of draws whose |S(tau)| exceeds the standard normal p-quantile.
inline double exceedance_proportion(const std::vector<double>& taus, std::size_t n, double p) {
  if (taus.empty()) throw DomainError("exceedance_proportion: no draws");
  const double z = std_normal_quantile(p);
  std::size_t count = 0;
  for (double t : taus)
    if (std::abs(tau_test_statistic(t, n)) > z) ++count;
  return static_cast<double>(count) / static_cast<double>(taus.size());
}

inline double exceedance_proportion(const Chain& chain, const GridPoint& x, std::size_t n, double p) {
  return exceedance_proportion(tau_draws(chain, {x}, 1).front(), n, p);
}

struct TauTestReport {
  std::vector<GridPoint> grid;
  std::vector<double> proportion;
  std::size_t n = 0;
  double quantile = 0.0;  // z_p
};

inline TauTestReport tau_test_report(const std::vector<GridPoint>& grid,
                                     const std::vector<std::vector<double>>& draws, std::size_t n, double p) {
  TauTestReport r;
  r.grid = grid;
  r.n = n;
  r.quantile = std_normal_quantile(p);
  for (const auto& d : draws) r.proportion.push_back(exceedance_proportion(d, n, p));
  return r;
}

namespace detail {

inline std::string format_double(double x) {
  std::ostringstream s;
  s << std::setprecision(10) << x;
  return s.str();
}

inline void write_grid_header(std::ostream& out, const CovariateSchema& schema) {
  bool first = true;
  auto sep = [&] {
    if (!first) out << ',';
    first = false;
  };
  for (const auto& c : schema.continuous) sep(), out << c;
  for (const auto& c : schema.all_categoricals()) sep(), out << c.name;
}

inline void write_grid_point(std::ostream& out, const GridPoint& pt, const CovariateSchema& schema) {
  bool first = true;
  auto sep = [&] {
    if (!first) out << ',';
    first = false;
  };
  for (double v : pt.continuous) sep(), out << format_double(v);
  for (const auto& c : schema.all_categoricals()) sep(), out << pt.labels.at(c.name);
}

}  // namespace detail

inline void write_tau_curve_csv(std::ostream& out, const TauCurve& curve, const CovariateSchema& schema) {
  detail::write_grid_header(out, schema);
  out << ",median,lower,upper\n";
  for (std::size_t g = 0; g < curve.grid.size(); ++g) {
    detail::write_grid_point(out, curve.grid[g], schema);
    out << ',' << detail::format_double(curve.median[g]) << ',' << detail::format_double(curve.lower[g]) << ','
        << detail::format_double(curve.upper[g]) << '\n';
  }
}

inline void write_tau_test_csv(std::ostream& out, const TauTestReport& report, const CovariateSchema& schema) {
  detail::write_grid_header(out, schema);
  out << ",proportion\n";
  for (std::size_t g = 0; g < report.grid.size(); ++g) {
    detail::write_grid_point(out, report.grid[g], schema);
    out << ',' << detail::format_double(report.proportion[g]) << '\n';
  }
}

}  // namespace ddpmc
