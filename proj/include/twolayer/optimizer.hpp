#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "twolayer/activations.hpp"
#include "twolayer/dataset.hpp"
#include "twolayer/network_params.hpp"

namespace twolayer {

// Alternating scheme: noisy projected SGD on theta (convex for fixed W),
// then one full gradient step on W.

using Rng = std::mt19937_64;

enum class BetaPolicy { constant_opt, fixed };
enum class GammaPolicy { one_over_L, fixed };

std::string to_string(BetaPolicy p);
std::string to_string(GammaPolicy p);
BetaPolicy parse_beta_policy(std::string_view name);
GammaPolicy parse_gamma_policy(std::string_view name);

struct InitConfig {
  double W_scale = 1.0;      // W0 entries ~ N(0, W_scale^2 / d)
  double theta_scale = 0.5;  // theta0 entries ~ N(0, theta_scale^2), then projected
};

struct RunConfig {
  std::size_t N_o = 100;
  std::size_t N_i = 100;
  /// Feasible theta set is the ball of radius R / 2.
  double R = 2.0;
  double sigma = 0.1;
  BetaPolicy beta_policy = BetaPolicy::constant_opt;
  double beta = 0.0;  // used when beta_policy == fixed
  GammaPolicy gamma_policy = GammaPolicy::one_over_L;
  double gamma = 0.0;  // used when gamma_policy == fixed
  bool theorem2_preset = false;
  bool early_exit = false;
  /// Stop the outer loop once ||grad_W f||_F <= grad_tol (0 disables).
  double grad_tol = 0.0;
  std::uint64_t seed = 0;
  InitConfig init;
  /// Hidden width n; defaults to d.
  std::optional<Eigen::Index> hidden;

  double radius() const noexcept { return R / 2.0; }
  /// Applies theorem2_preset: N_i = N_o, sigma = 1/sqrt(N_i), gamma = 1/L.
  RunConfig resolved() const;
  /// ConfigError on any out-of-range field. Step bounds that depend on data
  /// (beta vs L_theta, gamma vs L) are checked when the steps are taken.
  void validate() const;
};

/// JSON object with the RunConfig field names; absent keys keep defaults.
/// ConfigError on unknown keys or wrong types.
RunConfig run_config_from_json(std::string_view text);
std::string run_config_to_json(const RunConfig& cfg);

/// Projection of x - y onto the centered ball of the given radius.
/// ShapeError on length mismatch, ConfigError unless radius > 0.
Eigen::VectorXd prox_ball(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double radius);

/// grad_theta f + xi with xi_j i.i.d. N(0, sigma^2 / n), so E||xi||^2 = sigma^2.
Eigen::VectorXd stochastic_theta_grad(const NetworkParams& p, const ActivationFunction& a,
                                      const Dataset& ds, double sigma, Rng& rng);

/// f(W, .) is the quadratic 1/2 t^T G t - b^T t + c with G = H^T H / N,
/// b = H^T v / N, c = v^T v / (2N) and H = h(U W^T).
struct ThetaSubproblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd labels;
  Eigen::MatrixXd G;
  Eigen::VectorXd b;
  /// lambda_max(G), the exact Lipschitz constant of the theta-gradient.
  double L_theta = 0.0;

  ThetaSubproblem(const Eigen::MatrixXd& W, const ActivationFunction& a, const Dataset& ds);

  /// Same arithmetic as model::loss.
  double value(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const;
};

struct InnerResult {
  /// theta_{k+1}: the beta-weighted average (equal to the average at the
  /// early-exit step when early exit fired).
  Eigen::VectorXd theta;
  /// Last prox iterate.
  Eigen::VectorXd theta_last;
  std::size_t steps = 0;
  bool early_exited = false;
  double beta = 0.0;
  double L_theta = 0.0;
  double start_f = 0.0;
  double final_f = 0.0;
  double sum_beta = 0.0;
  double sum_beta_sq = 0.0;
};

/// Step size from the policy. ConfigError when a fixed beta exceeds 1/(2 L_theta).
double resolve_beta(const RunConfig& cfg, double L_theta);

/// Runs cfg.N_i prox steps from p.theta with W = p.W held fixed.
/// ConfigError when the step violates beta <= 1/(2 L_theta).
InnerResult inner_sgd(const NetworkParams& p, const ActivationFunction& a, const Dataset& ds,
                      const RunConfig& cfg, Rng& rng);

/// W - gamma grad_W f. ConfigError unless 0 < gamma < 2 / L.
NetworkParams outer_step(const NetworkParams& p, const ActivationFunction& a, const Dataset& ds,
                         double gamma, double L);

/// Deterministic accelerated projected gradient for min f(W, .) over the
/// ball, stopped once the gradient-map norm is <= tol.
struct ReferenceSolution {
  Eigen::VectorXd theta;
  double f = 0.0;
  double grad_map_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

ReferenceSolution reference_theta_star(const Eigen::MatrixXd& W, const ActivationFunction& a,
                                       const Dataset& ds, double radius, double tol = 1e-12,
                                       std::size_t max_iter = 2'000'000);

struct TrajectoryRow {
  std::size_t k = 0;
  double f = 0.0;            // f(W_k, theta_{k+1})
  double grad_norm_F = 0.0;  // ||grad_W f(W_k, theta_{k+1})||_F
  double sigma_min_W = 0.0;
  double sigma_min_D = 0.0;
  double resid_norm = 0.0;
  std::size_t inner_steps = 0;
  double inner_final_f = 0.0;
};

/// N_o + 1 rows: rows 0..N_o-1 hold (W_k, theta_{k+1}) after each inner
/// phase, the last row holds the returned (W_{N_o}, theta_{N_o}). When
/// grad_tol stops the run at row k, that row is the last one and the
/// returned params are (W_k, theta_{k+1}).
struct TrajectoryRecord {
  std::vector<TrajectoryRow> rows;
};

/// Column order of the trajectory CSV.
const std::vector<std::string>& trajectory_columns();
void write_trajectory_csv(const TrajectoryRecord& t, const std::filesystem::path& path);
/// Throws IoError / FormatError.
TrajectoryRecord read_trajectory_csv(const std::filesystem::path& path);

/// Quantities derived while running, echoed into manifests.
struct RunInfo {
  RunConfig config;  // after resolved()
  double L = 0.0;    // constant smoothness bound in W over the feasible ball
  double gamma = 0.0;
  double f0 = 0.0;  // f(W_0, theta_0)
  double L_theta_max = 0.0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::size_t early_exits = 0;
  bool stopped_on_grad_tol = false;
};

struct RunResult {
  NetworkParams params;
  NetworkParams initial;
  TrajectoryRecord trajectory;
  RunInfo info;
};

/// Random start as described by cfg.init, drawn from rng.
NetworkParams initialize(Eigen::Index n, Eigen::Index d, const RunConfig& cfg, Rng& rng);

/// Full run, reproducible from cfg.seed. NumericsError (naming the outer
/// iteration) on non-finite iterates.
RunResult run(const ActivationFunction& a, const Dataset& ds, const RunConfig& cfg);

}  // namespace twolayer
