#pragma once

// Raw outcome/covariate ingestion, rank pseudo-observations, design-matrix
// encoding and g-prior covariance blocks.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddpmc/copula.hpp"
#include "ddpmc/error.hpp"

namespace ddpmc {

struct Discretization {
  std::string source;               // numeric column to cut
  std::string name;                 // name of the derived categorical
  std::vector<double> cuts;         // ascending; bins are [cut_{k-1}, cut_k)
  std::vector<std::string> labels;  // cuts.size() + 1 labels

  std::string label_for(double value) const {
    const auto it = std::upper_bound(cuts.begin(), cuts.end(), value);
    return labels[static_cast<std::size_t>(it - cuts.begin())];
  }
};

struct CategoricalSpec {
  std::string name;
  std::vector<std::string> levels;  // first level is the reference
};

struct CovariateSchema {
  std::string y1 = "y1";
  std::string y2 = "y2";
  std::vector<std::string> continuous;
  std::vector<CategoricalSpec> categorical;
  std::vector<Discretization> discretizations;
  bool rescale = true;

  /// Categoricals in design order: declared ones, then discretizations.
  std::vector<CategoricalSpec> all_categoricals() const {
    std::vector<CategoricalSpec> out = categorical;
    for (const auto& d : discretizations) out.push_back({d.name, d.labels});
    return out;
  }

  std::size_t num_predictors() const {
    std::size_t p = 1 + continuous.size();
    for (const auto& c : all_categoricals()) p += c.levels.size() - 1;
    return p;
  }

  void validate() const {
    for (const auto& c : all_categoricals())
      if (c.levels.size() < 2) throw ConfigError("categorical '" + c.name + "' needs at least two levels");
    for (const auto& d : discretizations) {
      if (d.labels.size() != d.cuts.size() + 1)
        throw ConfigError("discretization '" + d.name + "' needs cuts.size() + 1 labels");
      if (!std::is_sorted(d.cuts.begin(), d.cuts.end()))
        throw ConfigError("discretization '" + d.name + "' cuts must be ascending");
    }
  }
};

inline void to_json(nlohmann::json& j, const CovariateSchema& s) {
  j = nlohmann::json{{"y1", s.y1}, {"y2", s.y2}, {"continuous", s.continuous}, {"rescale", s.rescale}};
  j["categorical"] = nlohmann::json::array();
  for (const auto& c : s.categorical) j["categorical"].push_back({{"name", c.name}, {"levels", c.levels}});
  j["discretizations"] = nlohmann::json::array();
  for (const auto& d : s.discretizations)
    j["discretizations"].push_back(
        {{"source", d.source}, {"name", d.name}, {"cuts", d.cuts}, {"labels", d.labels}});
}

inline void from_json(const nlohmann::json& j, CovariateSchema& s) {
  s = CovariateSchema{};
  s.y1 = j.value("y1", std::string("y1"));
  s.y2 = j.value("y2", std::string("y2"));
  s.continuous = j.value("continuous", std::vector<std::string>{});
  s.rescale = j.value("rescale", true);
  for (const auto& c : j.value("categorical", nlohmann::json::array()))
    s.categorical.push_back({c.at("name").get<std::string>(), c.at("levels").get<std::vector<std::string>>()});
  for (const auto& d : j.value("discretizations", nlohmann::json::array()))
    s.discretizations.push_back({d.at("source").get<std::string>(), d.at("name").get<std::string>(),
                                 d.at("cuts").get<std::vector<double>>(),
                                 d.at("labels").get<std::vector<std::string>>()});
  s.validate();
}

struct RawDataset {
  std::vector<double> y1;
  std::vector<double> y2;
  std::map<std::string, std::vector<double>> numeric;
  std::map<std::string, std::vector<std::string>> labels;
  std::size_t dropped_rows = 0;

  std::size_t n() const { return y1.size(); }

  void validate() const {
    const std::size_t rows = y1.size();
    if (y2.size() != rows) throw DataError("y1 and y2 have different lengths");
    for (const auto& [name, col] : numeric)
      if (col.size() != rows) throw DataError("column '" + name + "' has the wrong length");
    for (const auto& [name, col] : labels)
      if (col.size() != rows) throw DataError("column '" + name + "' has the wrong length");
  }

  RawDataset subset(const std::vector<std::size_t>& rows) const {
    RawDataset out;
    for (std::size_t r : rows) {
      out.y1.push_back(y1.at(r));
      out.y2.push_back(y2.at(r));
    }
    for (const auto& [name, col] : numeric)
      for (std::size_t r : rows) out.numeric[name].push_back(col.at(r));
    for (const auto& [name, col] : labels)
      for (std::size_t r : rows) out.labels[name].push_back(col.at(r));
    return out;
  }
};

/// Rank transform R_i / (n + 1); ties receive mid-ranks.
inline std::vector<double> pseudo_observations(const std::vector<double>& y) {
  const std::size_t n = y.size();
  if (n < 2) throw DomainError("pseudo_observations: need at least two values");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
  std::vector<double> out(n);
  const double denom = static_cast<double>(n) + 1.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && y[order[j]] == y[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) out[order[k]] = mid_rank / denom;
    i = j;
  }
  return out;
}

/// Median-unbiased sample quantile (Hyndman-Fan type 8).
inline double sample_quantile_type8(std::vector<double> values, double prob) {
  if (values.empty()) throw DomainError("sample quantile of an empty vector");
  if (!(prob >= 0.0 && prob <= 1.0)) throw DomainError("quantile level must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  const double h = (n + 1.0 / 3.0) * prob + 1.0 / 3.0;
  if (h <= 1.0) return values.front();
  if (h >= n) return values.back();
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  return values[lo - 1] + frac * (values[lo] - values[lo - 1]);
}

/// Indices whose value lies between the lower and upper sample quantiles.
inline std::vector<std::size_t> quartile_filter(const std::vector<double>& y, double lower, double upper) {
  if (y.empty()) throw DomainError("quartile_filter: empty input");
  if (!(lower >= 0.0 && lower < upper && upper <= 1.0))
    throw DomainError("quartile_filter: require 0 <= lower < upper <= 1");
  const double lo = sample_quantile_type8(y, lower);
  const double hi = sample_quantile_type8(y, upper);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] >= lo && y[i] <= hi) kept.push_back(i);
  return kept;
}

/// Maps original-scale covariate values to design rows: intercept,
/// continuous columns (optionally min-max rescaled), then reference-coded
/// dummies.
class DesignEncoder {
 public:
  struct Bounds {
    double lo = 0.0;
    double hi = 1.0;
  };

  DesignEncoder() = default;
  DesignEncoder(CovariateSchema schema, std::vector<Bounds> bounds)
      : schema_(std::move(schema)), bounds_(std::move(bounds)) {
    if (bounds_.size() != schema_.continuous.size())
      throw ConfigError("design encoder: one bound pair per continuous column required");
  }

  /// Learns rescaling bounds from the data.
  static DesignEncoder fit(const RawDataset& raw, const CovariateSchema& schema) {
    schema.validate();
    std::vector<Bounds> bounds;
    for (const auto& name : schema.continuous) {
      const auto it = raw.numeric.find(name);
      if (it == raw.numeric.end()) throw DataError("missing continuous column '" + name + "'");
      const auto [mn, mx] = std::minmax_element(it->second.begin(), it->second.end());
      if (!schema.rescale) {
        bounds.push_back({0.0, 1.0});
      } else {
        if (it->second.empty() || *mx <= *mn)
          throw DataError("continuous column '" + name + "' is constant; cannot rescale");
        bounds.push_back({*mn, *mx});
      }
    }
    return DesignEncoder(schema, std::move(bounds));
  }

  const CovariateSchema& schema() const { return schema_; }
  const std::vector<Bounds>& bounds() const { return bounds_; }
  std::size_t p() const { return schema_.num_predictors(); }

  /// Design column labels; the intercept is "(intercept)".
  std::vector<std::string> column_names() const {
    std::vector<std::string> out{"(intercept)"};
    for (const auto& c : schema_.continuous) out.push_back(c);
    for (const auto& c : schema_.all_categoricals())
      for (std::size_t k = 1; k < c.levels.size(); ++k) out.push_back(c.name + "=" + c.levels[k]);
    return out;
  }

  /// Column indices of the continuous block (intercept included) and the
  /// dummy block.
  std::vector<std::size_t> continuous_block() const {
    std::vector<std::size_t> idx(1 + schema_.continuous.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  std::vector<std::size_t> discrete_block() const {
    std::vector<std::size_t> idx;
    for (std::size_t k = 1 + schema_.continuous.size(); k < p(); ++k) idx.push_back(k);
    return idx;
  }

  double scale(std::size_t k, double value) const {
    return (value - bounds_[k].lo) / (bounds_[k].hi - bounds_[k].lo);
  }

  /// Encodes one point. `labels` is keyed by categorical name (including
  /// derived discretization names).
  Eigen::VectorXd encode(const std::vector<double>& continuous,
                         const std::map<std::string, std::string>& labels) const {
    if (continuous.size() != schema_.continuous.size())
      throw ConfigError("encode: expected " + std::to_string(schema_.continuous.size()) +
                        " continuous values");
    Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p()));
    row(0) = 1.0;
    Eigen::Index col = 1;
    for (std::size_t k = 0; k < continuous.size(); ++k) row(col++) = scale(k, continuous[k]);
    for (const auto& c : schema_.all_categoricals()) {
      const auto it = labels.find(c.name);
      if (it == labels.end()) throw ConfigError("encode: no level given for '" + c.name + "'");
      const auto lv = std::find(c.levels.begin(), c.levels.end(), it->second);
      if (lv == c.levels.end())
        throw DataError("unknown level '" + it->second + "' for categorical '" + c.name + "'");
      const auto level = static_cast<Eigen::Index>(lv - c.levels.begin());
      if (level > 0) row(col + level - 1) = 1.0;
      col += static_cast<Eigen::Index>(c.levels.size()) - 1;
    }
    return row;
  }

  Eigen::MatrixXd encode_rows(const RawDataset& raw) const {
    const std::size_t n = raw.n();
    Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p()));
    std::vector<const std::vector<double>*> cont;
    for (const auto& name : schema_.continuous) {
      const auto it = raw.numeric.find(name);
      if (it == raw.numeric.end()) throw DataError("missing continuous column '" + name + "'");
      cont.push_back(&it->second);
    }
    std::vector<std::size_t> bad_rows;
    std::string bad_detail;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> values;
      for (const auto* c : cont) values.push_back((*c)[i]);
      std::map<std::string, std::string> lab;
      for (const auto& c : schema_.categorical) {
        const auto it = raw.labels.find(c.name);
        if (it == raw.labels.end()) throw DataError("missing categorical column '" + c.name + "'");
        lab[c.name] = it->second[i];
      }
      for (const auto& d : schema_.discretizations) {
        const auto it = raw.numeric.find(d.source);
        if (it == raw.numeric.end()) throw DataError("missing discretization source '" + d.source + "'");
        lab[d.name] = d.label_for(it->second[i]);
      }
      try {
        design.row(static_cast<Eigen::Index>(i)) = encode(values, lab).transpose();
      } catch (const DataError& e) {
        bad_rows.push_back(i);
        if (bad_detail.empty()) bad_detail = e.what();
      }
    }
    if (!bad_rows.empty()) {
      std::ostringstream msg;
      msg << "unknown category label in rows";
      for (std::size_t k = 0; k < bad_rows.size() && k < 20; ++k) msg << ' ' << bad_rows[k] + 1;
      if (bad_rows.size() > 20) msg << " ...";
      msg << " (" << bad_detail << ")";
      throw DataError(msg.str());
    }
    return design;
  }

 private:
  CovariateSchema schema_;
  std::vector<Bounds> bounds_;
};

inline void to_json(nlohmann::json& j, const DesignEncoder& e) {
  j = nlohmann::json{{"schema", e.schema()}};
  j["bounds"] = nlohmann::json::array();
  for (const auto& b : e.bounds()) j["bounds"].push_back({b.lo, b.hi});
}

inline void from_json(const nlohmann::json& j, DesignEncoder& e) {
  std::vector<DesignEncoder::Bounds> bounds;
  for (const auto& b : j.at("bounds")) bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
  e = DesignEncoder(j.at("schema").get<CovariateSchema>(), std::move(bounds));
}

/// Model input: pseudo-observation pairs and their design rows.
struct PseudoDataset {
  std::vector<UnitPair> pairs;
  Eigen::MatrixXd design;  // n x p, first column all ones
  DesignEncoder encoder;

  std::size_t n() const { return pairs.size(); }
  std::size_t p() const { return static_cast<std::size_t>(design.cols()); }
};

inline PseudoDataset build_design(const RawDataset& raw, const CovariateSchema& schema) {
  raw.validate();
  PseudoDataset out;
  out.encoder = DesignEncoder::fit(raw, schema);
  out.design = out.encoder.encode_rows(raw);
  if (raw.n() >= 2) {
    const auto u1 = pseudo_observations(raw.y1);
    const auto u2 = pseudo_observations(raw.y2);
    out.pairs.reserve(raw.n());
    for (std::size_t i = 0; i < raw.n(); ++i) out.pairs.push_back({u1[i], u2[i]});
  }
  return out;
}

namespace detail {

inline Eigen::MatrixXd scaled_inverse_gram(const Eigen::MatrixXd& block, double c, const std::string& which) {
  if (!(c > 0.0)) throw DomainError("g-prior scaling for the " + which + " block must be positive");
  const Eigen::MatrixXd gram = block.transpose() * block;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double max_ev = eig.eigenvalues().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-10 * std::max(max_ev, 1.0)))
    throw NumericalError("g-prior: the " + which + " block is rank deficient");
  const Eigen::MatrixXd inv = gram.llt().solve(Eigen::MatrixXd::Identity(gram.rows(), gram.cols()));
  return c * 0.5 * (inv + inv.transpose());
}

}  // namespace detail

/// Block-diagonal g-prior covariance: c1 (X~'X~)^-1 on the continuous
/// columns, c2 (X-'X-)^-1 on the dummy columns, zero elsewhere.
inline Eigen::MatrixXd gprior_covariance(const Eigen::MatrixXd& design,
                                         const std::vector<std::size_t>& continuous_cols,
                                         const std::vector<std::size_t>& discrete_cols, double c1,
                                         double c2) {
  const auto p = design.cols();
  if (continuous_cols.size() + discrete_cols.size() != static_cast<std::size_t>(p))
    throw ConfigError("g-prior: blocks must partition the design columns");
  auto gather = [&](const std::vector<std::size_t>& cols) {
    Eigen::MatrixXd out(design.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k] >= static_cast<std::size_t>(p)) throw ConfigError("g-prior: column index out of range");
      out.col(static_cast<Eigen::Index>(k)) = design.col(static_cast<Eigen::Index>(cols[k]));
    }
    return out;
  };
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(p, p);
  auto place = [&](const std::vector<std::size_t>& cols, const Eigen::MatrixXd& blk) {
    for (std::size_t a = 0; a < cols.size(); ++a)
      for (std::size_t b = 0; b < cols.size(); ++b)
        sigma(static_cast<Eigen::Index>(cols[a]), static_cast<Eigen::Index>(cols[b])) =
            blk(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  };
  if (!continuous_cols.empty())
    place(continuous_cols, detail::scaled_inverse_gram(gather(continuous_cols), c1, "continuous"));
  if (!discrete_cols.empty())
    place(discrete_cols, detail::scaled_inverse_gram(gather(discrete_cols), c2, "discrete"));
  return sigma;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  }
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (used != s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads a headered CSV. Rows with an empty cell in any column the schema
/// needs are dropped and counted in `dropped_rows`.
inline RawDataset load_csv(const std::string& path, const CovariateSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty (header row expected)");
  const auto header = detail::split_csv_line(line);
  auto column_index = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("column '" + name + "' not found in '" + path + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<std::pair<std::string, std::size_t>> numeric_cols{{schema.y1, column_index(schema.y1)},
                                                               {schema.y2, column_index(schema.y2)}};
  for (const auto& c : schema.continuous) numeric_cols.emplace_back(c, column_index(c));
  for (const auto& d : schema.discretizations)
    if (std::none_of(numeric_cols.begin(), numeric_cols.end(), [&](const auto& nc) { return nc.first == d.source; }))
      numeric_cols.emplace_back(d.source, column_index(d.source));
  std::vector<std::pair<std::string, std::size_t>> label_cols;
  for (const auto& c : schema.categorical) label_cols.emplace_back(c.name, column_index(c.name));

  RawDataset raw;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    auto cell = [&](std::size_t idx) -> std::string { return idx < cells.size() ? cells[idx] : std::string{}; };
    bool missing = false;
    for (const auto& [name, idx] : numeric_cols) missing = missing || cell(idx).empty();
    for (const auto& [name, idx] : label_cols) missing = missing || cell(idx).empty();
    if (missing) {
      ++raw.dropped_rows;
      continue;
    }
    std::vector<double> values;
    for (const auto& [name, idx] : numeric_cols) {
      const auto v = detail::parse_double(cell(idx));
      if (!v)
        throw DataError("malformed numeric value '" + cell(idx) + "' at line " + std::to_string(line_no) +
                        ", column '" + name + "'");
      values.push_back(*v);
    }
    raw.y1.push_back(values[0]);
    raw.y2.push_back(values[1]);
    for (std::size_t k = 2; k < numeric_cols.size(); ++k) raw.numeric[numeric_cols[k].first].push_back(values[k]);
    for (const auto& [name, idx] : label_cols) raw.labels[name].push_back(cell(idx));
  }
  return raw;
}

}  // namespace ddpmc
