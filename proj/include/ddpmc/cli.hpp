#pragma once

// Command implementations behind the ddpmc executable. Each command takes
// a fully merged JSON run configuration, writes its outputs plus a
// manifest, and returns the manifest.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ddpmc/data.hpp"
#include "ddpmc/diagnostics.hpp"
#include "ddpmc/error.hpp"
#include "ddpmc/mcmc.hpp"
#include "ddpmc/model.hpp"
#include "ddpmc/posttau.hpp"
#include "ddpmc/simulation.hpp"

namespace ddpmc::cli {

inline constexpr const char* kCodeVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumerical = 4 };

/// Maps an exception escaping a command to the process exit code.
inline int exit_code_for(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError&) {
    return kUsage;
  } catch (const DomainError&) {
    return kUsage;
  } catch (const nlohmann::json::exception&) {
    return kUsage;
  } catch (const DataError&) {
    return kData;
  } catch (const NumericalError&) {
    return kNumerical;
  } catch (...) {
    return kFailure;
  }
}

/// 64-bit FNV-1a of the canonical JSON text.
inline std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline std::filesystem::path out_dir(const nlohmann::json& cfg) {
  std::filesystem::path dir = cfg.value("out_dir", std::string{"."});
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

inline nlohmann::json write_manifest(const std::filesystem::path& path, const std::string& command,
                                     const nlohmann::json& config, const std::vector<std::filesystem::path>& outputs,
                                     nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json m{{"command", command},
                   {"code_version", kCodeVersion},
                   {"config_hash", config_hash(config)},
                   {"config", config},
                   {"outputs", nlohmann::json::array()}};
  for (const auto& o : outputs) m["outputs"].push_back(o.filename().string());
  for (auto& [k, v] : extra.items()) m[k] = v;
  auto out = open_out(path);
  out << m.dump(2) << '\n';
  return m;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const std::string& file) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    throw DataError("'" + file + "' has no column '" + name + "'");
  }

  double number(std::size_t row, std::size_t col, const std::string& file) const {
    const auto v = ddpmc::detail::parse_double(rows.at(row).at(col));
    if (!v) throw DataError("'" + file + "' line " + std::to_string(row + 2) + ": bad number");
    return *v;
  }
};

inline Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  t.header = ddpmc::detail::split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = ddpmc::detail::split_csv_line(line);
    if (cells.size() != t.header.size())
      throw DataError("'" + path + "' line " + std::to_string(t.rows.size() + 2) + ": wrong number of cells");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate

/// Config: {"scenario": ScenarioConfig, "out_dir", "prefix", "grid_points",
/// "oracle_pairs"}. Writes <prefix>.csv (y1,y2,x), <prefix>_truth.csv
/// (x,tau_true) and <prefix>.manifest.json.
inline nlohmann::json cmd_simulate(const nlohmann::json& cfg) {
  const auto sc = cfg.value("scenario", nlohmann::json::object()).get<ScenarioConfig>();
  sc.validate();
  const auto dir = detail::out_dir(cfg);
  const std::string prefix = cfg.value("prefix", "scenario_" + to_string(sc.scenario));
  const auto grid = il1_grid(cfg.value("grid_points", std::size_t{100}));
  const auto pairs = cfg.value("oracle_pairs", std::size_t{1000000});

  const auto sim = generate_scenario(sc);
  const auto data_path = dir / (prefix + ".csv");
  {
    auto out = detail::open_out(data_path);
    out << "y1,y2,x\n";
    const auto& x = sim.raw.numeric.at("x");
    for (std::size_t i = 0; i < sim.raw.n(); ++i)
      out << fmt17(sim.raw.y1[i]) << ',' << fmt17(sim.raw.y2[i]) << ',' << fmt17(x[i]) << '\n';
  }
  const auto truth = scenario_truth(sc, grid, pairs, 0);
  const auto truth_path = dir / (prefix + "_truth.csv");
  {
    auto out = detail::open_out(truth_path);
    out << "x,tau_true\n";
    for (std::size_t l = 0; l < grid.size(); ++l) out << fmt17(grid[l]) << ',' << fmt17(truth[l]) << '\n';
  }
  nlohmann::json resolved = cfg;
  resolved["scenario"] = sc;
  return detail::write_manifest(dir / (prefix + ".manifest.json"), "simulate", resolved, {data_path, truth_path},
                                {{"rows", sim.raw.n()}, {"seed", sc.seed}});
}

// ---------------------------------------------------------------------------
// fit

struct FitInputs {
  RawDataset raw;
  PseudoDataset data;
  CovariateSchema schema;
};

/// Loads the data named in a fit config and applies any outcome filters
/// ({"column", "lower", "upper"} quantile levels, applied in order).
inline FitInputs load_fit_inputs(const nlohmann::json& cfg) {
  if (!cfg.contains("data")) throw ConfigError("fit: no data file given");
  FitInputs in;
  in.schema = cfg.contains("schema") ? cfg.at("schema").get<CovariateSchema>() : scenario_schema();
  in.schema.validate();
  const std::string path = cfg.at("data").get<std::string>();
  if (!std::filesystem::exists(path)) throw DataError("data file '" + path + "' not found");
  in.raw = load_csv(path, in.schema);
  if (in.raw.dropped_rows > 0)
    std::cerr << "warning: dropped " << in.raw.dropped_rows << " row(s) with missing cells from '" << path << "'\n";
  for (const auto& f : cfg.value("filters", nlohmann::json::array())) {
    const std::string col = f.at("column").get<std::string>();
    const std::vector<double>* y = nullptr;
    if (col == in.schema.y1)
      y = &in.raw.y1;
    else if (col == in.schema.y2)
      y = &in.raw.y2;
    else if (in.raw.numeric.count(col))
      y = &in.raw.numeric.at(col);
    else
      throw ConfigError("filter: unknown numeric column '" + col + "'");
    in.raw = in.raw.subset(quartile_filter(*y, f.value("lower", 0.25), f.value("upper", 0.75)));
  }
  if (in.raw.n() < 10) throw DataError("fit: fewer than 10 rows remain after filtering");
  in.data = build_design(in.raw, in.schema);
  return in;
}

/// Prior from the "prior" object: isotropic {"scale", "alpha"} or g-prior
/// {"c_v", "c_rho"} with both blocks sharing each constant. A g-prior
/// without constants calibrates them from "v_range" and "rho_range".
inline PriorSpec build_prior(const nlohmann::json& cfg, const PseudoDataset& data, nlohmann::json& report) {
  const auto pj = cfg.value("prior", nlohmann::json::object());
  const std::string type = pj.value("type", std::string{"isotropic"});
  const double scale = pj.value("scale", 2.25);
  const double alpha = pj.value("alpha", 1.0);
  if (!(scale > 0.0)) throw ConfigError("prior: scale must be positive");
  if (!(alpha > 0.0)) throw ConfigError("prior: alpha must be positive");
  PriorSpec prior = PriorSpec::isotropic(data.p(), scale, alpha);
  if (type == "isotropic") return prior;
  if (type != "gprior") throw ConfigError("prior: unknown type '" + type + "'");

  const auto cont = data.encoder.continuous_block();
  const auto disc = data.encoder.discrete_block();
  const Eigen::MatrixXd unit = gprior_covariance(data.design, cont, disc, 1.0, 1.0);
  double c_v = pj.value("c_v", 0.0);
  double c_rho = pj.value("c_rho", 0.0);
  if (!pj.contains("c_v") || !pj.contains("c_rho")) {
    const auto v_range = pj.value("v_range", std::vector<double>{0.02, 0.99});
    const auto rho_range = pj.value("rho_range", std::vector<double>{-0.70, 1.00});
    if (v_range.size() != 2 || rho_range.size() != 2) throw ConfigError("prior: ranges need two values");
    const double tail = pj.value("tail", 0.025);
    const auto draws = pj.value("draws", std::size_t{2000});
    RngStream rng(pj.value("seed", std::uint64_t{1}), kOracleStreamBase - 1);
    const auto gv = calibrate_gprior_scale(data.design, unit, Link::kStick, v_range[0], v_range[1], rng, draws, tail);
    const auto gr =
        calibrate_gprior_scale(data.design, unit, Link::kCorrelation, rho_range[0], rho_range[1], rng, draws, tail);
    if (!pj.contains("c_v")) c_v = gv.c;
    if (!pj.contains("c_rho")) c_rho = gr.c;
    report["calibration"] = {{"c_v", gv.c}, {"v_quantiles", {gv.lower, gv.upper}},
                             {"c_rho", gr.c}, {"rho_quantiles", {gr.lower, gr.upper}}, {"tail", tail}};
  }
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.p()));
  prior.v = MvnPrior(zero, c_v * unit);
  prior.rho = MvnPrior(zero, c_rho * unit);
  report["c_v"] = c_v;
  report["c_rho"] = c_rho;
  return prior;
}

inline nlohmann::json diagnostics_json(const Chain& chain) {
  try {
    return nlohmann::json(diagnostics(chain));
  } catch (const DomainError& e) {
    return nlohmann::json{{"skipped", e.what()}};
  }
}

/// Config: {"data", "schema", "filters", "model", "prior", "chain":
/// ChainConfig, "chains", "resume", "out_dir", "prefix"}. With k > 1 chains,
/// chain i uses stream id i and writes <prefix>_<i>.chain.
inline nlohmann::json cmd_fit(const nlohmann::json& cfg) {
  const ModelKind kind = parse_model_kind(cfg.value("model", std::string{"ddpmc"}));
  auto chain_cfg = cfg.value("chain", nlohmann::json::object()).get<ChainConfig>();
  chain_cfg.validate();
  const auto k = cfg.value("chains", std::size_t{1});
  if (k == 0) throw ConfigError("fit: --chains must be at least 1");
  const bool resume = cfg.value("resume", false);
  const auto dir = detail::out_dir(cfg);
  const std::string prefix = cfg.value("prefix", to_string(kind));

  const FitInputs in = load_fit_inputs(cfg);
  nlohmann::json prior_report = nlohmann::json::object();
  const PriorSpec prior = build_prior(cfg, in.data, prior_report);

  std::vector<std::filesystem::path> chain_paths;
  std::vector<ChainConfig> configs;
  for (std::size_t c = 0; c < k; ++c) {
    ChainConfig cc = chain_cfg;
    if (k > 1) cc.stream_id = c;
    configs.push_back(cc);
    chain_paths.push_back(dir / (k == 1 ? prefix + ".chain" : prefix + "_" + std::to_string(c) + ".chain"));
  }
  std::vector<Chain> chains(k);
  std::vector<std::exception_ptr> errors(k);
  auto run = [&](std::size_t c) {
    try {
      chains[c] = run_chain_to_file(in.data, prior, kind, configs[c], chain_paths[c], resume);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (k == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t c = 0; c < k; ++c) pool.emplace_back(run, c);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  nlohmann::json diag = nlohmann::json::array();
  for (std::size_t c = 0; c < k; ++c)
    diag.push_back({{"chain", chain_paths[c].filename().string()},
                    {"draws", chains[c].size()},
                    {"diagnostics", diagnostics_json(chains[c])}});
  const auto diag_path = dir / (prefix + "_diagnostics.json");
  {
    auto out = detail::open_out(diag_path);
    out << diag.dump(2) << '\n';
  }
  std::vector<std::filesystem::path> outputs = chain_paths;
  outputs.push_back(diag_path);
  nlohmann::json resolved = cfg;
  resolved["chain"] = chain_cfg;
  return detail::write_manifest(dir / (prefix + ".manifest.json"), "fit", resolved, outputs,
                                {{"rows", in.raw.n()},
                                 {"dropped_rows", in.raw.dropped_rows},
                                 {"p", in.data.p()},
                                 {"draws", chains.front().size()},
                                 {"prior", prior_report}});
}

// ---------------------------------------------------------------------------
// tau

/// Concatenates the draws of chains fitted with the same model and design.
inline Chain pool_chains(const std::vector<Chain>& chains) {
  if (chains.empty()) throw ConfigError("tau: no chain given");
  Chain out = chains.front();
  for (std::size_t c = 1; c < chains.size(); ++c) {
    const Chain& ch = chains[c];
    if (ch.model != out.model || ch.p != out.p || ch.truncation() != out.truncation() || ch.design != out.design)
      throw ConfigError("tau: chains were fitted with different models or designs");
    out.iteration.insert(out.iteration.end(), ch.iteration.begin(), ch.iteration.end());
    out.rng_position.insert(out.rng_position.end(), ch.rng_position.begin(), ch.rng_position.end());
    out.log_posterior.insert(out.log_posterior.end(), ch.log_posterior.begin(), ch.log_posterior.end());
    out.params.insert(out.params.end(), ch.params.begin(), ch.params.end());
  }
  return out;
}

/// Config: {"chains": [paths] or "chain": path, "grid": SectionGridSpec,
/// "level", "p", "n", "out_dir", "prefix"}. Without a grid the single
/// continuous covariate runs over 100 points on [0.01, 0.99]. Writes
/// <prefix>_curve.csv, <prefix>_test.csv and a manifest.
inline nlohmann::json cmd_tau(const nlohmann::json& cfg) {
  std::vector<std::string> paths;
  if (cfg.contains("chains")) paths = cfg.at("chains").get<std::vector<std::string>>();
  if (cfg.contains("chain")) paths.push_back(cfg.at("chain").get<std::string>());
  if (paths.empty()) throw ConfigError("tau: no chain file given");
  std::vector<Chain> chains;
  for (const auto& p : paths) chains.push_back(read_chain(p));
  const Chain chain = pool_chains(chains);
  if (chain.size() == 0) throw DataError("tau: chain has no saved draws");
  if (chain.design.is_null()) throw DataError("tau: chain file carries no design encoder");
  const auto encoder = chain.design.get<DesignEncoder>();

  const double level = cfg.value("level", 0.95);
  const double prob = cfg.value("p", 0.975);
  if (!(prob > 0.0 && prob < 1.0)) throw ConfigError("tau: p must lie in (0,1)");
  const auto n = cfg.value("n", chain.n);
  if (n < 2) throw ConfigError("tau: sample size n unknown; pass --n");
  std::vector<GridPoint> grid;
  if (cfg.contains("grid"))
    grid = build_section_grid(encoder, cfg.at("grid").get<SectionGridSpec>());
  else
    grid = covariate_grid(encoder, il1_grid());

  const auto dir = detail::out_dir(cfg);
  const std::string prefix = cfg.value("prefix", std::string{"tau"});
  auto draws = tau_draws(chain, grid);
  const TauTestReport report = tau_test_report(grid, draws, n, prob);
  const TauCurve curve = summarize_tau_draws(grid, std::move(draws), level);

  const auto curve_path = dir / (prefix + "_curve.csv");
  const auto test_path = dir / (prefix + "_test.csv");
  {
    auto out = detail::open_out(curve_path);
    write_tau_curve_csv(out, curve, encoder.schema());
  }
  {
    auto out = detail::open_out(test_path);
    write_tau_test_csv(out, report, encoder.schema());
  }
  return detail::write_manifest(dir / (prefix + ".manifest.json"), "tau", cfg, {curve_path, test_path},
                                {{"grid_points", grid.size()},
                                 {"draws", chain.size()},
                                 {"n", n},
                                 {"z_p", report.quantile},
                                 {"level", level}});
}

// ---------------------------------------------------------------------------
// compare

/// Config: {"truth": truth CSV, "curves": {label: curve CSV}, "out_dir",
/// "prefix"}. Curves and truth must share the grid (first column). Writes
/// <prefix>.json with the integrated L1 of each curve's median.
inline nlohmann::json cmd_compare(const nlohmann::json& cfg) {
  if (!cfg.contains("truth")) throw ConfigError("compare: no truth file given");
  if (!cfg.contains("curves") || cfg.at("curves").empty()) throw ConfigError("compare: no curves given");
  const std::string truth_file = cfg.at("truth").get<std::string>();
  const auto truth = detail::read_table(truth_file);
  const auto tcol = truth.column("tau_true", truth_file);
  std::vector<double> tx, tt;
  for (std::size_t r = 0; r < truth.rows.size(); ++r) {
    tx.push_back(truth.number(r, 0, truth_file));
    tt.push_back(truth.number(r, tcol, truth_file));
  }
  nlohmann::json il1 = nlohmann::json::object();
  for (const auto& [label, file_j] : cfg.at("curves").items()) {
    const std::string file = file_j.get<std::string>();
    const auto curve = detail::read_table(file);
    if (curve.rows.size() != tx.size())
      throw DomainError("compare: '" + file + "' has " + std::to_string(curve.rows.size()) +
                        " grid points, truth has " + std::to_string(tx.size()));
    const auto mcol = curve.column("median", file);
    std::vector<double> med;
    for (std::size_t r = 0; r < curve.rows.size(); ++r) {
      const double x = curve.number(r, 0, file);
      if (std::abs(x - tx[r]) > 1e-9 * std::max(1.0, std::abs(tx[r])))
        throw DomainError("compare: grid of '" + file + "' differs from the truth grid at row " +
                          std::to_string(r + 1));
      med.push_back(curve.number(r, mcol, file));
    }
    il1[label] = integrated_l1(med, tt);
  }
  const auto dir = detail::out_dir(cfg);
  const std::string prefix = cfg.value("prefix", std::string{"compare"});
  const auto out_path = dir / (prefix + ".json");
  {
    auto out = detail::open_out(out_path);
    out << nlohmann::json{{"il1", il1}, {"grid_points", tx.size()}}.dump(2) << '\n';
  }
  return detail::write_manifest(dir / (prefix + ".manifest.json"), "compare", cfg, {out_path}, {{"il1", il1}});
}

}  // namespace ddpmc::cli
