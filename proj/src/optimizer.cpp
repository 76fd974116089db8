#include "twolayer/optimizer.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "csv_io.hpp"
#include "json_io.hpp"
#include "twolayer/diagnostics.hpp"
#include "twolayer/errors.hpp"
#include "twolayer/model.hpp"

namespace twolayer {

using detail::json;

std::string to_string(BetaPolicy p) {
  return p == BetaPolicy::constant_opt ? "constant_opt" : "fixed";
}

std::string to_string(GammaPolicy p) {
  return p == GammaPolicy::one_over_L ? "one_over_L" : "fixed";
}

BetaPolicy parse_beta_policy(std::string_view name) {
  if (name == "constant_opt") return BetaPolicy::constant_opt;
  if (name == "fixed") return BetaPolicy::fixed;
  throw ConfigError("unknown beta_policy '" + std::string(name) + "'");
}

GammaPolicy parse_gamma_policy(std::string_view name) {
  if (name == "one_over_L") return GammaPolicy::one_over_L;
  if (name == "fixed") return GammaPolicy::fixed;
  throw ConfigError("unknown gamma_policy '" + std::string(name) + "'");
}

RunConfig RunConfig::resolved() const {
  RunConfig out = *this;
  if (theorem2_preset) {
    out.N_i = N_o;
    out.sigma = N_o > 0 ? 1.0 / std::sqrt(static_cast<double>(N_o)) : sigma;
    out.gamma_policy = GammaPolicy::one_over_L;
  }
  return out;
}

void RunConfig::validate() const {
  auto finite_nonneg = [](double x) { return std::isfinite(x) && x >= 0.0; };
  if (N_i < 1) throw ConfigError("RunConfig: N_i must be >= 1");
  if (!(std::isfinite(R) && R > 0.0)) throw ConfigError("RunConfig: R must be finite and > 0");
  if (!finite_nonneg(sigma)) throw ConfigError("RunConfig: sigma must be finite and >= 0");
  if (beta_policy == BetaPolicy::fixed && !(std::isfinite(beta) && beta > 0.0)) {
    throw ConfigError("RunConfig: fixed beta must be > 0");
  }
  if (gamma_policy == GammaPolicy::fixed && !(std::isfinite(gamma) && gamma > 0.0)) {
    throw ConfigError("RunConfig: fixed gamma must be > 0");
  }
  if (!finite_nonneg(init.W_scale) || !finite_nonneg(init.theta_scale)) {
    throw ConfigError("RunConfig: init scales must be finite and >= 0");
  }
  if (!finite_nonneg(grad_tol)) throw ConfigError("RunConfig: grad_tol must be finite and >= 0");
  if (hidden && *hidden < 1) throw ConfigError("RunConfig: hidden must be >= 1");
}

RunConfig run_config_from_json(std::string_view text) {
  RunConfig cfg;
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    for (const auto& [key, val] : j.items()) {
      if (key == "N_o") cfg.N_o = val.get<std::size_t>();
      else if (key == "N_i") cfg.N_i = val.get<std::size_t>();
      else if (key == "R") cfg.R = val.get<double>();
      else if (key == "sigma") cfg.sigma = val.get<double>();
      else if (key == "beta_policy") cfg.beta_policy = parse_beta_policy(val.get<std::string>());
      else if (key == "beta") cfg.beta = val.get<double>();
      else if (key == "gamma_policy") cfg.gamma_policy = parse_gamma_policy(val.get<std::string>());
      else if (key == "gamma") cfg.gamma = val.get<double>();
      else if (key == "theorem2_preset") cfg.theorem2_preset = val.get<bool>();
      else if (key == "early_exit") cfg.early_exit = val.get<bool>();
      else if (key == "grad_tol") cfg.grad_tol = val.get<double>();
      else if (key == "seed") cfg.seed = val.get<std::uint64_t>();
      else if (key == "hidden") {
        if (val.is_null()) cfg.hidden.reset();
        else cfg.hidden = val.get<Eigen::Index>();
      } else if (key == "init") {
        for (const auto& [ik, iv] : val.items()) {
          if (ik == "W_scale") cfg.init.W_scale = iv.get<double>();
          else if (ik == "theta_scale") cfg.init.theta_scale = iv.get<double>();
          else throw ConfigError("unknown init key '" + ik + "'");
        }
      } else {
        throw ConfigError("unknown run config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j{{"N_o", cfg.N_o},
         {"N_i", cfg.N_i},
         {"R", cfg.R},
         {"sigma", cfg.sigma},
         {"beta_policy", to_string(cfg.beta_policy)},
         {"beta", cfg.beta},
         {"gamma_policy", to_string(cfg.gamma_policy)},
         {"gamma", cfg.gamma},
         {"theorem2_preset", cfg.theorem2_preset},
         {"early_exit", cfg.early_exit},
         {"grad_tol", cfg.grad_tol},
         {"seed", cfg.seed},
         {"init", {{"W_scale", cfg.init.W_scale}, {"theta_scale", cfg.init.theta_scale}}}};
  j["hidden"] = cfg.hidden ? json(*cfg.hidden) : json(nullptr);
  return j.dump();
}

Eigen::VectorXd prox_ball(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double radius) {
  if (x.size() != y.size()) throw ShapeError("prox_ball: x and y lengths differ");
  if (!(radius > 0.0)) throw ConfigError("prox_ball: radius must be > 0");
  Eigen::VectorXd out = x - y;
  const double nrm = out.norm();
  if (nrm <= radius) return out;
  out *= radius / nrm;
  // Rounding can leave the norm an ulp above the radius.
  while (out.norm() > radius) out *= std::nextafter(1.0, 0.0);
  return out;
}

namespace {

void add_noise(Eigen::VectorXd& g, double sigma, Rng& rng) {
  if (sigma == 0.0 || g.size() == 0) return;
  std::normal_distribution<double> normal(0.0, sigma / std::sqrt(static_cast<double>(g.size())));
  for (Eigen::Index j = 0; j < g.size(); ++j) g[j] += normal(rng);
}

}  // namespace

Eigen::VectorXd stochastic_theta_grad(const NetworkParams& p, const ActivationFunction& a,
                                      const Dataset& ds, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("stochastic_theta_grad: sigma must be >= 0");
  Eigen::VectorXd g = grad_theta(p, a, ds);
  add_noise(g, sigma, rng);
  return g;
}

ThetaSubproblem::ThetaSubproblem(const Eigen::MatrixXd& W, const ActivationFunction& a,
                                 const Dataset& ds)
    : H(hidden_layer(W, a, ds.inputs()).act), labels(ds.labels()) {
  const double N = static_cast<double>(ds.size());
  G = H.transpose() * H / N;
  b = H.transpose() * labels / N;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G, Eigen::EigenvaluesOnly);
  L_theta = std::max(0.0, eig.eigenvalues().maxCoeff());
}

double ThetaSubproblem::value(const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd s = labels - H * theta;
  return s.squaredNorm() / (2.0 * static_cast<double>(labels.size()));
}

Eigen::VectorXd ThetaSubproblem::gradient(const Eigen::VectorXd& theta) const {
  return G * theta - b;
}

double resolve_beta(const RunConfig& cfg, double L_theta) {
  const double inf = std::numeric_limits<double>::infinity();
  const double cap = L_theta > 0.0 ? 1.0 / (2.0 * L_theta) : inf;
  if (cfg.beta_policy == BetaPolicy::fixed) {
    if (!(cfg.beta > 0.0)) throw ConfigError("beta must be > 0");
    if (cfg.beta > cap * (1.0 + 1e-12)) {
      throw ConfigError("beta = " + detail::format_double(cfg.beta) + " exceeds 1/(2 L_theta) = " +
                        detail::format_double(cap));
    }
    return cfg.beta;
  }
  const double noise_cap =
      cfg.sigma > 0.0 ? std::sqrt(1.0 / (static_cast<double>(cfg.N_i) * cfg.sigma * cfg.sigma))
                      : inf;
  const double beta = std::min(cap, noise_cap);
  // Constant subproblem (H = 0): any step is exact.
  return std::isfinite(beta) ? beta : 1.0;
}

InnerResult inner_sgd(const NetworkParams& p, const ActivationFunction& a, const Dataset& ds,
                      const RunConfig& cfg, Rng& rng) {
  check_shapes(p, ds);
  if (cfg.N_i < 1) throw ConfigError("inner_sgd: N_i must be >= 1");
  if (!(cfg.sigma >= 0.0)) throw ConfigError("inner_sgd: sigma must be >= 0");
  const double r = cfg.radius();
  const ThetaSubproblem sub(p.W, a, ds);

  InnerResult res;
  res.L_theta = sub.L_theta;
  res.beta = resolve_beta(cfg, sub.L_theta);

  Eigen::VectorXd theta = prox_ball(p.theta, Eigen::VectorXd::Zero(p.theta.size()), r);
  Eigen::VectorXd weighted = Eigen::VectorXd::Zero(theta.size());
  res.start_f = sub.value(p.theta);
  Eigen::VectorXd avg = theta;

  for (std::size_t tau = 0; tau < cfg.N_i; ++tau) {
    Eigen::VectorXd g = sub.gradient(theta);
    add_noise(g, cfg.sigma, rng);
    theta = prox_ball(theta, res.beta * g, r);
    weighted += res.beta * theta;
    res.sum_beta += res.beta;
    res.sum_beta_sq += res.beta * res.beta;
    ++res.steps;
    if (cfg.early_exit) {
      avg = weighted / res.sum_beta;
      if (sub.value(avg) <= res.start_f) {
        res.early_exited = true;
        break;
      }
    }
  }
  if (!res.early_exited) avg = weighted / res.sum_beta;
  if (avg.norm() > r) avg = prox_ball(avg, Eigen::VectorXd::Zero(avg.size()), r);
  if (!avg.allFinite()) throw NumericsError("inner_sgd: non-finite theta iterate");

  res.theta = std::move(avg);
  res.theta_last = std::move(theta);
  res.final_f = sub.value(res.theta);
  return res;
}

NetworkParams outer_step(const NetworkParams& p, const ActivationFunction& a, const Dataset& ds,
                         double gamma, double L) {
  if (!(gamma > 0.0 && gamma * L < 2.0)) {
    throw ConfigError("outer_step: gamma = " + detail::format_double(gamma) +
                      " outside (0, 2/L) with L = " + detail::format_double(L));
  }
  NetworkParams out = p;
  out.W -= gamma * grad_W(p, a, ds);
  return out;
}

ReferenceSolution reference_theta_star(const Eigen::MatrixXd& W, const ActivationFunction& a,
                                       const Dataset& ds, double radius, double tol,
                                       std::size_t max_iter) {
  if (!(radius > 0.0)) throw ConfigError("reference_theta_star: radius must be > 0");
  const ThetaSubproblem sub(W, a, ds);
  const auto n = W.rows();
  ReferenceSolution sol;
  sol.theta = Eigen::VectorXd::Zero(n);
  if (sub.L_theta == 0.0) {
    sol.f = sub.value(sol.theta);
    sol.converged = true;
    return sol;
  }

  const double L = sub.L_theta;
  auto grad_map = [&](const Eigen::VectorXd& x) {
    return L * (x - prox_ball(x, sub.gradient(x) / L, radius)).norm();
  };

  Eigen::VectorXd x = sol.theta;
  Eigen::VectorXd y = x;
  double t = 1.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd x_next = prox_ball(y, sub.gradient(y) / L, radius);
    // Gradient-based adaptive restart.
    if ((y - x_next).dot(x_next - x) > 0.0) {
      t = 1.0;
      y = x_next;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = x_next + ((t - 1.0) / t_next) * (x_next - x);
      t = t_next;
    }
    x = x_next;
    sol.iterations = it;
    sol.grad_map_norm = grad_map(x);
    if (sol.grad_map_norm <= tol) {
      sol.converged = true;
      break;
    }
  }
  sol.theta = x;
  sol.f = sub.value(x);
  return sol;
}

const std::vector<std::string>& trajectory_columns() {
  static const std::vector<std::string> cols{"k",          "f",           "grad_norm_F",
                                             "sigma_min_W", "sigma_min_D", "resid_norm",
                                             "inner_steps", "inner_final_f"};
  return cols;
}

void write_trajectory_csv(const TrajectoryRecord& t, const std::filesystem::path& path) {
  std::ostringstream out;
  const auto& cols = trajectory_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << '\n';
  using detail::format_double;
  for (const auto& r : t.rows) {
    out << r.k << ',' << format_double(r.f) << ',' << format_double(r.grad_norm_F) << ','
        << format_double(r.sigma_min_W) << ',' << format_double(r.sigma_min_D) << ','
        << format_double(r.resid_norm) << ',' << r.inner_steps << ','
        << format_double(r.inner_final_f) << '\n';
  }
  detail::write_text_file(path, out.str());
}

TrajectoryRecord read_trajectory_csv(const std::filesystem::path& path) {
  std::istringstream in(detail::read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  TrajectoryRecord t;
  const auto ncols = trajectory_columns().size();
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line.rfind("k,", 0) != 0) {
        throw FormatError(path.string() + ": missing trajectory header", lineno);
      }
      header_seen = true;
      continue;
    }
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      double v = 0.0;
      if (!detail::parse_double(tok, v)) {
        throw FormatError(path.string() + ": non-numeric token '" + tok + "'", lineno);
      }
      vals.push_back(v);
    }
    if (vals.size() != ncols) {
      throw FormatError(path.string() + ": expected " + std::to_string(ncols) + " columns",
                        lineno);
    }
    TrajectoryRow r;
    r.k = static_cast<std::size_t>(vals[0]);
    r.f = vals[1];
    r.grad_norm_F = vals[2];
    r.sigma_min_W = vals[3];
    r.sigma_min_D = vals[4];
    r.resid_norm = vals[5];
    r.inner_steps = static_cast<std::size_t>(vals[6]);
    r.inner_final_f = vals[7];
    t.rows.push_back(r);
  }
  if (!header_seen) throw FormatError(path.string() + ": empty trajectory file", 0);
  return t;
}

NetworkParams initialize(Eigen::Index n, Eigen::Index d, const RunConfig& cfg, Rng& rng) {
  if (n < 1 || n > d) throw ConfigError("initialize: need 1 <= n <= d");
  std::normal_distribution<double> normal(0.0, 1.0);
  NetworkParams p;
  p.W.resize(n, d);
  const double w_sd = cfg.init.W_scale / std::sqrt(static_cast<double>(d));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < d; ++k) p.W(j, k) = w_sd * normal(rng);
  p.theta.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) p.theta[j] = cfg.init.theta_scale * normal(rng);
  p.theta = prox_ball(p.theta, Eigen::VectorXd::Zero(n), cfg.radius());
  return p;
}

namespace {

TrajectoryRow measure(std::size_t k, const NetworkParams& p, const ActivationFunction& a,
                      const Dataset& ds) {
  TrajectoryRow row;
  row.k = k;
  const auto sys = stationarity_system(p, a, ds);
  row.resid_norm = sys.s.norm();
  row.f = sys.s.squaredNorm() / (2.0 * static_cast<double>(ds.size()));
  row.grad_norm_F = grad_W(p, a, ds).norm();
  row.sigma_min_W = svd_rank(p.W).sigma_min;
  const auto D = svd_rank(sys.D);
  row.sigma_min_D = ds.size() <= sys.D.rows() ? D.singular_values[ds.size() - 1] : 0.0;
  return row;
}

}  // namespace

RunResult run(const ActivationFunction& a, const Dataset& ds, const RunConfig& cfg_in) {
  const RunConfig cfg = cfg_in.resolved();
  cfg.validate();
  const auto d = ds.dim();
  const auto n = cfg.hidden.value_or(d);
  if (n > d) throw ConfigError("run: hidden width n must be <= d");

  RunResult res;
  res.info.config = cfg;
  res.info.L = lipschitz_W_bound_on_ball(a, ds, cfg.radius());
  const double L = res.info.L;
  if (cfg.gamma_policy == GammaPolicy::one_over_L) {
    if (!std::isfinite(L)) {
      throw ConfigError("gamma = 1/L unavailable: smoothness bound is infinite for activation '" +
                        a.name() + "'");
    }
    res.info.gamma = L > 0.0 ? 1.0 / L : 1.0;
  } else {
    if (!(cfg.gamma * L < 2.0)) {
      throw ConfigError("fixed gamma = " + detail::format_double(cfg.gamma) +
                        " violates gamma < 2/L with L = " + detail::format_double(L));
    }
    res.info.gamma = cfg.gamma;
  }

  Rng rng(cfg.seed);
  NetworkParams p = initialize(n, d, cfg, rng);
  res.initial = p;
  res.info.f0 = loss(p, a, ds);
  res.info.beta_min = std::numeric_limits<double>::infinity();
  res.trajectory.rows.reserve(cfg.N_o + 1);

  auto numerics = [](std::size_t k, const std::string& what) {
    return NumericsError("outer iteration " + std::to_string(k) + ": " + what);
  };

  for (std::size_t k = 0; k < cfg.N_o; ++k) {
    try {
      const auto inner = inner_sgd(p, a, ds, cfg, rng);
      p.theta = inner.theta;
      res.info.L_theta_max = std::max(res.info.L_theta_max, inner.L_theta);
      res.info.beta_min = std::min(res.info.beta_min, inner.beta);
      res.info.beta_max = std::max(res.info.beta_max, inner.beta);
      if (inner.early_exited) ++res.info.early_exits;

      auto row = measure(k, p, a, ds);
      row.inner_steps = inner.steps;
      row.inner_final_f = inner.final_f;
      res.trajectory.rows.push_back(row);
      if (cfg.grad_tol > 0.0 && row.grad_norm_F <= cfg.grad_tol) {
        res.info.stopped_on_grad_tol = true;
        break;
      }

      p = outer_step(p, a, ds, res.info.gamma, L);
      if (!p.W.allFinite()) throw numerics(k, "non-finite W");
    } catch (const NumericsError& e) {
      const std::string msg = e.what();
      if (msg.rfind("outer iteration", 0) == 0) throw;
      throw numerics(k, msg);
    }
  }

  if (!res.info.stopped_on_grad_tol) {
    try {
      auto last = measure(cfg.N_o, p, a, ds);
      last.inner_final_f = last.f;
      res.trajectory.rows.push_back(last);
    } catch (const NumericsError& e) {
      throw numerics(cfg.N_o, e.what());
    }
  }
  if (cfg.N_o == 0) {
    res.info.L_theta_max = ThetaSubproblem(p.W, a, ds).L_theta;
    res.info.beta_min = res.info.beta_max = 0.0;
  }
  res.params = p;
  return res;
}

}  // namespace twolayer
