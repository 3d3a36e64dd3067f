#pragma once

// Posterior sampling for the DDPMC and LDVR models, with chains streamed to
// an append-only file (JSON header line + little-endian float64 records).

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddpmc/data.hpp"
#include "ddpmc/error.hpp"
#include "ddpmc/model.hpp"
#include "ddpmc/rng.hpp"
#include "ddpmc/slice.hpp"

namespace ddpmc {

enum class ModelKind { kDdpmc, kLdvr };

inline std::string to_string(ModelKind k) { return k == ModelKind::kDdpmc ? "ddpmc" : "ldvr"; }

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "ddpmc") return ModelKind::kDdpmc;
  if (s == "ldvr") return ModelKind::kLdvr;
  throw ConfigError("unknown model '" + s + "' (expected ddpmc or ldvr)");
}

struct ChainConfig {
  std::size_t iterations = 20000;
  std::size_t burn_in = 5000;
  std::size_t thin = 5;
  std::size_t truncation = 20;
  /// Slice box width in prior standard deviations, used when explicit
  /// widths are not given.
  double width_scale = 5.0;
  std::vector<double> widths_v;    // per coefficient, DDPMC stick block
  std::vector<double> widths_rho;  // per coefficient, DDPMC correlation block / LDVR beta
  std::size_t max_step_outs = 0;
  double stick_step = 1.0;  // LDVR logit-scale random-walk sd
  std::uint64_t seed = 1;
  std::uint64_t stream_id = 0;

  std::size_t saved_count() const { return (iterations - burn_in) / thin; }

  bool saves(std::size_t iteration) const {
    return iteration > burn_in && (iteration - burn_in) % thin == 0;
  }

  void validate() const {
    if (iterations == 0) throw ConfigError("chain: iterations must be positive");
    if (burn_in >= iterations) throw ConfigError("chain: burn_in must be smaller than iterations");
    if (thin == 0) throw ConfigError("chain: thin must be at least 1");
    if (truncation < 2) throw ConfigError("chain: truncation level must be at least 2");
    if (!(width_scale > 0.0) || !std::isfinite(width_scale)) throw ConfigError("chain: width_scale must be positive");
    if (!(stick_step > 0.0)) throw ConfigError("chain: stick_step must be positive");
    for (double w : widths_v)
      if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("chain: slice widths must be positive");
    for (double w : widths_rho)
      if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("chain: slice widths must be positive");
  }
};

inline void to_json(nlohmann::json& j, const ChainConfig& c) {
  j = nlohmann::json{{"iterations", c.iterations}, {"burn_in", c.burn_in},   {"thin", c.thin},
                     {"truncation", c.truncation}, {"width_scale", c.width_scale}, {"widths_v", c.widths_v},
                     {"widths_rho", c.widths_rho}, {"max_step_outs", c.max_step_outs},
                     {"stick_step", c.stick_step}, {"seed", c.seed},         {"stream_id", c.stream_id}};
}

inline void from_json(const nlohmann::json& j, ChainConfig& c) {
  const ChainConfig d;
  c.iterations = j.value("iterations", d.iterations);
  c.burn_in = j.value("burn_in", d.burn_in);
  c.thin = j.value("thin", d.thin);
  c.truncation = j.value("truncation", d.truncation);
  c.width_scale = j.value("width_scale", d.width_scale);
  c.widths_v = j.value("widths_v", d.widths_v);
  c.widths_rho = j.value("widths_rho", d.widths_rho);
  c.max_step_outs = j.value("max_step_outs", d.max_step_outs);
  c.stick_step = j.value("stick_step", d.stick_step);
  c.seed = j.value("seed", d.seed);
  c.stream_id = j.value("stream_id", d.stream_id);
}

/// Saved draws of one chain. Each record holds the parameters in the
/// layout given by `parameter_names()`.
struct Chain {
  ModelKind model = ModelKind::kDdpmc;
  std::size_t p = 0;
  std::size_t n = 0;  // rows in the fitted data
  ChainConfig config;
  double ldvr_alpha = 1.0;
  nlohmann::json design;  // serialized DesignEncoder, when known

  std::vector<std::uint64_t> iteration;
  std::vector<std::uint64_t> rng_position;
  std::vector<double> log_posterior;
  std::vector<std::vector<double>> params;

  std::size_t size() const { return params.size(); }
  std::size_t truncation() const { return config.truncation; }

  std::size_t param_width() const {
    const std::size_t n_comp = config.truncation;
    return model == ModelKind::kDdpmc ? (2 * n_comp - 1) * p : 2 + (n_comp - 1);
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    const std::size_t n_comp = config.truncation;
    if (model == ModelKind::kDdpmc) {
      for (std::size_t j = 0; j + 1 < n_comp; ++j)
        for (std::size_t k = 0; k < p; ++k)
          names.push_back("beta_v[" + std::to_string(j) + "][" + std::to_string(k) + "]");
      for (std::size_t j = 0; j < n_comp; ++j)
        for (std::size_t k = 0; k < p; ++k)
          names.push_back("beta_rho[" + std::to_string(j) + "][" + std::to_string(k) + "]");
    } else {
      names = {"beta[0]", "beta[1]"};
      for (std::size_t j = 0; j + 1 < n_comp; ++j) names.push_back("v[" + std::to_string(j) + "]");
    }
    return names;
  }

  DdpmcState ddpmc_state(std::size_t m) const {
    if (model != ModelKind::kDdpmc) throw ConfigError("chain does not hold DDPMC draws");
    return unpack_ddpmc(params.at(m), config.truncation, p);
  }

  LdvrState ldvr_state(std::size_t m) const {
    if (model != ModelKind::kLdvr) throw ConfigError("chain does not hold LDVR draws");
    return unpack_ldvr(params.at(m), config.truncation, ldvr_alpha);
  }

  static std::vector<double> pack(const DdpmcState& s) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(s.beta_v.size() + s.beta_rho.size()));
    for (Eigen::Index j = 0; j < s.beta_v.rows(); ++j)
      for (Eigen::Index k = 0; k < s.beta_v.cols(); ++k) out.push_back(s.beta_v(j, k));
    for (Eigen::Index j = 0; j < s.beta_rho.rows(); ++j)
      for (Eigen::Index k = 0; k < s.beta_rho.cols(); ++k) out.push_back(s.beta_rho(j, k));
    return out;
  }

  static std::vector<double> pack(const LdvrState& s) {
    std::vector<double> out{s.beta(0), s.beta(1)};
    for (Eigen::Index j = 0; j < s.v.size(); ++j) out.push_back(s.v(j));
    return out;
  }

  static DdpmcState unpack_ddpmc(const std::vector<double>& rec, std::size_t n_comp, std::size_t p) {
    DdpmcState s = DdpmcState::zeros(n_comp, p);
    std::size_t pos = 0;
    for (Eigen::Index j = 0; j < s.beta_v.rows(); ++j)
      for (Eigen::Index k = 0; k < s.beta_v.cols(); ++k) s.beta_v(j, k) = rec.at(pos++);
    for (Eigen::Index j = 0; j < s.beta_rho.rows(); ++j)
      for (Eigen::Index k = 0; k < s.beta_rho.cols(); ++k) s.beta_rho(j, k) = rec.at(pos++);
    return s;
  }

  static LdvrState unpack_ldvr(const std::vector<double>& rec, std::size_t n_comp, double alpha) {
    LdvrState s;
    s.beta << rec.at(0), rec.at(1);
    s.v.resize(static_cast<Eigen::Index>(n_comp - 1));
    for (Eigen::Index j = 0; j < s.v.size(); ++j) s.v(j) = rec.at(2 + static_cast<std::size_t>(j));
    s.alpha = alpha;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Chain file

namespace detail {

inline void write_le_double(std::ostream& out, double value) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &value, sizeof bits);
  unsigned char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline double read_le_double(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  double value = 0.0;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

}  // namespace detail

inline constexpr std::size_t kRecordPrefix = 3;  // iteration, rng position, log posterior

inline nlohmann::json chain_header(const Chain& chain) {
  std::vector<std::string> layout{"iteration", "rng_position", "log_posterior"};
  for (auto& name : chain.parameter_names()) layout.push_back(std::move(name));
  return nlohmann::json{{"format", "ddpmc-chain"},
                        {"version", 1},
                        {"model", to_string(chain.model)},
                        {"p", chain.p},
                        {"n", chain.n},
                        {"N", chain.config.truncation},
                        {"config", chain.config},
                        {"seed", chain.config.seed},
                        {"stream_id", chain.config.stream_id},
                        {"ldvr_alpha", chain.ldvr_alpha},
                        {"design", chain.design},
                        {"record_width", layout.size()},
                        {"layout", layout}};
}

/// Appends records to a chain file; writes the header when the file is new.
class ChainWriter {
 public:
  ChainWriter(const std::filesystem::path& path, const Chain& meta, bool append = false) {
    if (append) {
      out_.open(path, std::ios::binary | std::ios::app);
    } else {
      out_.open(path, std::ios::binary | std::ios::trunc);
      if (out_) out_ << chain_header(meta).dump() << '\n';
    }
    if (!out_) throw DataError("cannot write chain file '" + path.string() + "'");
    width_ = meta.param_width();
  }

  void append(std::uint64_t iteration, std::uint64_t rng_position, double log_posterior,
              const std::vector<double>& params) {
    if (params.size() != width_) throw ConfigError("chain record has the wrong width");
    detail::write_le_double(out_, static_cast<double>(iteration));
    detail::write_le_double(out_, static_cast<double>(rng_position));
    detail::write_le_double(out_, log_posterior);
    for (double v : params) detail::write_le_double(out_, v);
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  std::size_t width_ = 0;
};

/// Reads a chain file. A trailing partial record (interrupted write) is
/// ignored.
inline Chain read_chain(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open chain file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("chain file '" + path.string() + "' has no header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("chain file '" + path.string() + "': bad header: " + e.what());
  }
  if (header.value("format", std::string{}) != "ddpmc-chain")
    throw DataError("'" + path.string() + "' is not a chain file");
  Chain chain;
  chain.model = parse_model_kind(header.at("model").get<std::string>());
  chain.p = header.at("p").get<std::size_t>();
  chain.n = header.value("n", std::size_t{0});
  chain.config = header.at("config").get<ChainConfig>();
  chain.ldvr_alpha = header.value("ldvr_alpha", 1.0);
  chain.design = header.value("design", nlohmann::json{});
  const std::size_t width = header.at("record_width").get<std::size_t>();
  if (width != kRecordPrefix + chain.param_width()) throw DataError("chain header: inconsistent record width");

  std::vector<unsigned char> buf(width * 8);
  while (in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    chain.iteration.push_back(static_cast<std::uint64_t>(detail::read_le_double(buf.data())));
    chain.rng_position.push_back(static_cast<std::uint64_t>(detail::read_le_double(buf.data() + 8)));
    chain.log_posterior.push_back(detail::read_le_double(buf.data() + 16));
    std::vector<double> rec(width - kRecordPrefix);
    for (std::size_t k = 0; k < rec.size(); ++k) rec[k] = detail::read_le_double(buf.data() + 8 * (k + kRecordPrefix));
    chain.params.push_back(std::move(rec));
  }
  return chain;
}

// ---------------------------------------------------------------------------
// Samplers

/// Called for each saved draw: (iteration, rng position, log posterior, params).
using DrawSink = std::function<void(std::uint64_t, std::uint64_t, double, const std::vector<double>&)>;

/// Where to pick a chain back up: the last saved record of an earlier run.
struct ResumePoint {
  std::uint64_t iteration = 0;
  std::uint64_t rng_position = 0;
  std::vector<double> params;
};

namespace detail {

inline Eigen::VectorXd slice_widths(const std::vector<double>& explicit_widths, const MvnPrior& prior,
                                    double scale) {
  if (!explicit_widths.empty()) {
    if (explicit_widths.size() != prior.dim()) throw ConfigError("chain: slice width count must equal p");
    return Eigen::Map<const Eigen::VectorXd>(explicit_widths.data(),
                                             static_cast<Eigen::Index>(explicit_widths.size()));
  }
  return scale * prior.sd();
}

}  // namespace detail

/// Runs one chain. DDPMC: each sweep updates beta^v_j then beta^rho_j for
/// j = 1..N by hyperrectangle slice sampling on log prior + marginal
/// mixture log likelihood. LDVR: slice update of beta, then a logit-scale
/// random-walk Metropolis step per stick variable.
inline Chain run_chain(const PseudoDataset& data, const PriorSpec& prior, ModelKind kind, const ChainConfig& config,
                       const DrawSink& sink = {}, const std::optional<ResumePoint>& resume = std::nullopt) {
  config.validate();
  const ScoredData scored(data);
  const std::size_t n_comp = config.truncation;
  const std::size_t p = data.p();

  Chain chain;
  chain.model = kind;
  chain.p = p;
  chain.n = data.n();
  chain.config = config;
  chain.ldvr_alpha = prior.ldvr_alpha;
  chain.design = data.encoder.p() > 0 ? nlohmann::json(data.encoder) : nlohmann::json{};

  RngStream rng(config.seed, config.stream_id);
  std::size_t first_iteration = 1;
  SliceOptions slice_opts;
  slice_opts.max_step_outs = config.max_step_outs;

  auto save = [&](std::size_t iteration, double log_post, std::vector<double> rec) {
    if (!std::isfinite(log_post))
      throw NumericalError("non-finite log posterior at iteration " + std::to_string(iteration));
    if (sink) sink(iteration, rng.position(), log_post, rec);
    chain.iteration.push_back(iteration);
    chain.rng_position.push_back(rng.position());
    chain.log_posterior.push_back(log_post);
    chain.params.push_back(std::move(rec));
  };

  if (kind == ModelKind::kDdpmc) {
    if (prior.v.dim() != p || prior.rho.dim() != p) throw ConfigError("prior dimension does not match the design");
    DdpmcState state = DdpmcState::zeros(n_comp, p);
    if (resume) {
      state = Chain::unpack_ddpmc(resume->params, n_comp, p);
      rng.seek(resume->rng_position);
      first_iteration = resume->iteration + 1;
    } else {
      for (Eigen::Index j = 0; j < state.beta_v.rows(); ++j) state.beta_v.row(j) = prior.v.draw(rng).transpose();
      for (Eigen::Index j = 0; j < state.beta_rho.rows(); ++j)
        state.beta_rho.row(j) = prior.rho.draw(rng).transpose();
    }
    const Eigen::VectorXd w_v = detail::slice_widths(config.widths_v, prior.v, config.width_scale);
    const Eigen::VectorXd w_rho = detail::slice_widths(config.widths_rho, prior.rho, config.width_scale);
    DdpmcLikelihood lik(scored, state);

    for (std::size_t it = first_iteration; it <= config.iterations; ++it) {
      try {
        for (std::size_t j = 0; j < n_comp; ++j) {
          const auto row = static_cast<Eigen::Index>(j);
          if (j + 1 < n_comp) {
            lik.prepare_v(j);
            auto target = [&](const Eigen::VectorXd& b) { return prior.v.logpdf(b) + lik.eval_v(b); };
            const auto res = slice_update_vector(target, state.beta_v.row(row).transpose(), w_v, rng, slice_opts);
            state.beta_v.row(row) = res.x.transpose();
            lik.commit_v(j, res.x);
          }
          lik.prepare_rho(j);
          auto target = [&](const Eigen::VectorXd& b) { return prior.rho.logpdf(b) + lik.eval_rho(b); };
          const auto res = slice_update_vector(target, state.beta_rho.row(row).transpose(), w_rho, rng, slice_opts);
          state.beta_rho.row(row) = res.x.transpose();
          lik.commit_rho(j, res.x);
        }
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (iteration " + std::to_string(it) + ")");
      }
      if (config.saves(it)) save(it, log_prior(state, prior) + lik.total(), Chain::pack(state));
    }
  } else {
    if (p < 2) throw ConfigError("LDVR needs a design with one continuous covariate");
    LdvrState state;
    state.alpha = prior.ldvr_alpha;
    state.v.resize(static_cast<Eigen::Index>(n_comp - 1));
    if (resume) {
      state = Chain::unpack_ldvr(resume->params, n_comp, prior.ldvr_alpha);
      rng.seek(resume->rng_position);
      first_iteration = resume->iteration + 1;
    } else {
      state.beta = prior.ldvr_beta.draw(rng);
      for (Eigen::Index j = 0; j < state.v.size(); ++j)
        state.v(j) = std::clamp(rng.beta(1.0, state.alpha), 1e-12, 1.0 - 1e-12);
    }
    const Eigen::VectorXd w_beta = detail::slice_widths(config.widths_rho, prior.ldvr_beta, config.width_scale);
    auto beta_target = [&](const Eigen::VectorXd& b) {
      LdvrState s = state;
      s.beta = b;
      return prior.ldvr_beta.logpdf(b) + ldvr_loglik(scored, s);
    };
    // Stick target on the logit scale: Beta(1, alpha) density times the
    // Jacobian v (1 - v).
    auto stick_target = [&](double y) {
      return std::log(state.alpha) - softplus(-y) + state.alpha * (-softplus(y));
    };
    for (std::size_t it = first_iteration; it <= config.iterations; ++it) {
      try {
        const auto res = slice_update_vector(beta_target, Eigen::VectorXd(state.beta), w_beta, rng, slice_opts);
        state.beta = res.x;
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (iteration " + std::to_string(it) + ")");
      }
      for (Eigen::Index j = 0; j < state.v.size(); ++j) {
        const double y = std::log(state.v(j)) - std::log1p(-state.v(j));
        const double proposal = y + config.stick_step * rng.normal();
        const double log_ratio = stick_target(proposal) - stick_target(y);
        if (std::log(rng.uniform()) < log_ratio) {
          const double v = logistic(proposal);
          if (v > 0.0 && v < 1.0) state.v(j) = v;
        }
      }
      if (config.saves(it)) save(it, log_prior(state, prior) + ldvr_loglik(scored, state), Chain::pack(state));
    }
  }
  return chain;
}

/// Runs a chain and streams its draws to `path`. With `resume` set and an
/// existing file, continues from the last complete record; the result is
/// bitwise identical to an uninterrupted run.
inline Chain run_chain_to_file(const PseudoDataset& data, const PriorSpec& prior, ModelKind kind,
                               const ChainConfig& config, const std::filesystem::path& path, bool resume = false) {
  std::optional<ResumePoint> point;
  Chain previous;
  if (resume && std::filesystem::exists(path)) {
    previous = read_chain(path);
    if (previous.model != kind || previous.p != data.p() || previous.n != data.n() ||
        nlohmann::json(previous.config) != nlohmann::json(config))
      throw ConfigError("cannot resume: chain file was produced with a different configuration");
    // Drop any partial trailing record before appending.
    std::size_t header_bytes = 0;
    {
      std::ifstream in(path, std::ios::binary);
      std::string header_line;
      std::getline(in, header_line);
      header_bytes = header_line.size() + 1;
    }
    const auto record_bytes = (kRecordPrefix + previous.param_width()) * 8;
    std::filesystem::resize_file(path, header_bytes + previous.size() * record_bytes);
    if (previous.size() > 0)
      point = ResumePoint{previous.iteration.back(), previous.rng_position.back(), previous.params.back()};
  }
  Chain meta;
  meta.model = kind;
  meta.p = data.p();
  meta.n = data.n();
  meta.config = config;
  meta.ldvr_alpha = prior.ldvr_alpha;
  meta.design = data.encoder.p() > 0 ? nlohmann::json(data.encoder) : nlohmann::json{};
  ChainWriter writer(path, meta, point.has_value());
  Chain fresh = run_chain(
      data, prior, kind, config,
      [&](std::uint64_t it, std::uint64_t pos, double lp, const std::vector<double>& rec) {
        writer.append(it, pos, lp, rec);
      },
      point);
  writer.flush();
  if (!point) return fresh;
  for (std::size_t m = 0; m < fresh.size(); ++m) {
    previous.iteration.push_back(fresh.iteration[m]);
    previous.rng_position.push_back(fresh.rng_position[m]);
    previous.log_posterior.push_back(fresh.log_posterior[m]);
    previous.params.push_back(fresh.params[m]);
  }
  return previous;
}

}  // namespace ddpmc
