#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddpmc/cli.hpp"

namespace {

using nlohmann::json;

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ddpmc::DataError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ddpmc::ConfigError("config file '" + path + "': " + e.what());
  }
}

// Flag values override the config document; unset flags leave it alone.
template <class T>
void put(json& doc, const json::json_pointer& ptr, const std::optional<T>& value) {
  if (value) doc[ptr] = *value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariate-dependent copula mixtures: simulate, fit, tau curves, comparison"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ddpmc::cli::kCodeVersion);

  std::string config_path;

  auto* sim = app.add_subcommand("simulate", "Generate a scenario dataset and its true tau curve");
  std::optional<std::string> scenario;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  std::optional<double> nu;
  std::optional<std::string> mix_weight;
  std::optional<std::size_t> oracle_pairs;
  std::optional<std::string> out_dir;
  std::optional<std::string> prefix;
  sim->add_option("--config", config_path, "JSON run configuration");
  sim->add_option("--scenario", scenario, "I or II")->check(CLI::IsMember({"I", "II"}));
  sim->add_option("--n", n, "sample size");
  sim->add_option("--seed", seed, "random seed");
  sim->add_option("--nu", nu, "t-copula degrees of freedom");
  sim->add_option("--mix-weight", mix_weight, "identity, complement or half");
  sim->add_option("--oracle-pairs", oracle_pairs, "Monte Carlo pairs per grid point for the truth");
  sim->add_option("--out-dir", out_dir, "output directory");
  sim->add_option("--prefix", prefix, "output file prefix");

  auto* fit = app.add_subcommand("fit", "Run MCMC for DDPMC or LDVR");
  std::optional<std::string> data;
  std::optional<std::string> model;
  std::optional<std::size_t> iterations, burn_in, thin, truncation, chains;
  bool resume = false;
  fit->add_option("--config", config_path, "JSON run configuration");
  fit->add_option("--data", data, "input CSV");
  fit->add_option("--model", model, "ddpmc or ldvr")->check(CLI::IsMember({"ddpmc", "ldvr"}));
  fit->add_option("--iterations", iterations, "total iterations");
  fit->add_option("--burn-in", burn_in, "burn-in iterations");
  fit->add_option("--thin", thin, "thinning interval");
  fit->add_option("--truncation", truncation, "truncation level N");
  fit->add_option("--seed", seed, "random seed");
  fit->add_option("--chains", chains, "independent chains (stream ids 0..k-1)");
  fit->add_flag("--resume", resume, "continue an existing chain file");
  fit->add_option("--out-dir", out_dir, "output directory");
  fit->add_option("--prefix", prefix, "output file prefix");

  auto* tau = app.add_subcommand("tau", "Posterior tau curves and test-statistic proportions");
  std::vector<std::string> chain_files;
  std::optional<double> level, prob;
  std::optional<std::string> grid_file;
  tau->add_option("--config", config_path, "JSON run configuration");
  tau->add_option("--chain", chain_files, "chain file(s); draws are pooled");
  tau->add_option("--grid", grid_file, "JSON section-grid specification");
  tau->add_option("--level", level, "credible band level");
  tau->add_option("--p", prob, "normal quantile level for the test statistic");
  tau->add_option("--n", n, "sample size for the test statistic (default: from the chain)");
  tau->add_option("--out-dir", out_dir, "output directory");
  tau->add_option("--prefix", prefix, "output file prefix");

  auto* cmp = app.add_subcommand("compare", "Integrated L1 of tau curves against a truth file");
  std::optional<std::string> truth;
  std::vector<std::string> curves;
  cmp->add_option("--config", config_path, "JSON run configuration");
  cmp->add_option("--truth", truth, "truth CSV (x,tau_true)");
  cmp->add_option("--curve", curves, "label=curve.csv, repeatable");
  cmp->add_option("--out-dir", out_dir, "output directory");
  cmp->add_option("--prefix", prefix, "output file prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ddpmc::cli::kUsage;
  }

  try {
    json cfg = load_config(config_path);
    put(cfg, "/out_dir"_json_pointer, out_dir);
    put(cfg, "/prefix"_json_pointer, prefix);
    json manifest;
    if (sim->parsed()) {
      put(cfg, "/scenario/scenario"_json_pointer, scenario);
      put(cfg, "/scenario/n"_json_pointer, n);
      put(cfg, "/scenario/seed"_json_pointer, seed);
      put(cfg, "/scenario/nu"_json_pointer, nu);
      put(cfg, "/scenario/mix_weight_fn"_json_pointer, mix_weight);
      put(cfg, "/oracle_pairs"_json_pointer, oracle_pairs);
      manifest = ddpmc::cli::cmd_simulate(cfg);
    } else if (fit->parsed()) {
      put(cfg, "/data"_json_pointer, data);
      put(cfg, "/model"_json_pointer, model);
      put(cfg, "/chain/iterations"_json_pointer, iterations);
      put(cfg, "/chain/burn_in"_json_pointer, burn_in);
      put(cfg, "/chain/thin"_json_pointer, thin);
      put(cfg, "/chain/truncation"_json_pointer, truncation);
      put(cfg, "/chain/seed"_json_pointer, seed);
      put(cfg, "/chains"_json_pointer, chains);
      if (resume) cfg["resume"] = true;
      manifest = ddpmc::cli::cmd_fit(cfg);
    } else if (tau->parsed()) {
      if (!chain_files.empty()) {
        cfg.erase("chain");
        cfg["chains"] = chain_files;
      }
      if (grid_file) cfg["grid"] = load_config(*grid_file);
      put(cfg, "/level"_json_pointer, level);
      put(cfg, "/p"_json_pointer, prob);
      put(cfg, "/n"_json_pointer, n);
      manifest = ddpmc::cli::cmd_tau(cfg);
    } else if (cmp->parsed()) {
      put(cfg, "/truth"_json_pointer, truth);
      for (const auto& c : curves) {
        const auto eq = c.find('=');
        if (eq == std::string::npos || eq == 0) throw ddpmc::ConfigError("--curve expects label=path, got '" + c + "'");
        cfg["curves"][c.substr(0, eq)] = c.substr(eq + 1);
      }
      manifest = ddpmc::cli::cmd_compare(cfg);
    }
    std::cout << manifest.dump(2) << '\n';
    return ddpmc::cli::kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ddpmc::cli::exit_code_for(std::current_exception());
  }
}
