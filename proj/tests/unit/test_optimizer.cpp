#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "frozen_values.hpp"
#include "test_support.hpp"
#include "twolayer/diagnostics.hpp"
#include "twolayer/errors.hpp"
#include "twolayer/model.hpp"
#include "twolayer/optimizer.hpp"

using namespace twolayer;
namespace ts = testing_support;

namespace {

Dataset realizable(std::uint64_t seed, Eigen::Index d = 3, Eigen::Index N = 9) {
  ts::Rng rng(seed);
  const auto U = generate_inputs(d, N, InputDistribution::uniform_cube, seed);
  NetworkParams t{ts::gaussian(d, d, 1.0 / std::sqrt(double(d)), rng),
                  ts::gaussian(d, 1, 0.5, rng).col(0)};
  return label_with_teacher(U, Teacher{t, "sigmoid"});
}

const ActivationFunction& sig() { return builtin_activation("sigmoid"); }

NetworkParams random_params(Eigen::Index n, Eigen::Index d, ts::Rng& rng, double radius) {
  NetworkParams p{ts::gaussian(n, d, 1.0, rng), ts::gaussian(n, 1, 0.5, rng).col(0)};
  if (p.theta.norm() > radius) p.theta *= radius / p.theta.norm() * 0.99;
  return p;
}

}  // namespace

TEST(Prox, Examples) {
  EXPECT_EQ(prox_ball(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), 1.0),
            Eigen::VectorXd::Zero(2));
  Eigen::VectorXd x(2), y(2);
  x << 2.0, 0.0;
  y << 0.0, 0.0;
  const auto p = prox_ball(x, y, 1.0);
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_DOUBLE_EQ(p[1], 0.0);
  x << 0.3, -0.2;
  y << 0.1, 0.1;
  EXPECT_EQ(prox_ball(x, y, 1.0), Eigen::VectorXd(x - y));
  EXPECT_THROW(prox_ball(x, Eigen::VectorXd::Zero(3), 1.0), ShapeError);
  EXPECT_THROW(prox_ball(x, y, 0.0), ConfigError);
}

TEST(Prox, FeasibleAndMatchesRadialProjection) {
  ts::Rng rng(1);
  for (int t = 0; t < 2000; ++t) {
    const auto n = ts::uniform_int(1, 6, rng);
    const Eigen::VectorXd x = ts::gaussian(n, 1, 3.0, rng).col(0);
    const Eigen::VectorXd y = ts::gaussian(n, 1, 3.0, rng).col(0);
    const double r = std::exp(ts::uniform(1, 1, -3.0, 2.0, rng)(0, 0));
    const auto p = prox_ball(x, y, r);
    EXPECT_LE(p.norm(), r);
    const Eigen::VectorXd c = x - y;
    const Eigen::VectorXd expect = c.norm() <= r ? c : Eigen::VectorXd(c * (r / c.norm()));
    EXPECT_LE((p - expect).norm(), 1e-14 * std::max(1.0, c.norm()));
  }
}

TEST(StochasticGrad, ExactDeterministicAndCalibrated) {
  ts::Rng rng(2);
  const auto ds = ts::random_dataset(3, 9, rng);
  const auto p = random_params(3, 3, rng, 1.0);
  const auto g = grad_theta(p, sig(), ds);
  Rng a(5), b(5);
  EXPECT_EQ(stochastic_theta_grad(p, sig(), ds, 0.0, a), g);
  EXPECT_EQ(stochastic_theta_grad(p, sig(), ds, 0.3, a), stochastic_theta_grad(p, sig(), ds, 0.3, b));

  const double sigma = 0.7;
  const int draws = 100000;
  double sq = 0.0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  Rng r(9);
  for (int t = 0; t < draws; ++t) {
    const Eigen::VectorXd xi = stochastic_theta_grad(p, sig(), ds, sigma, r) - g;
    sq += xi.squaredNorm();
    mean += xi;
  }
  EXPECT_LE(std::abs(sq / draws - sigma * sigma), 0.02 * sigma * sigma);
  EXPECT_LE((mean / draws).norm(), 5.0 * sigma / std::sqrt(double(draws)));
}

TEST(ThetaSubproblem, MatchesModel) {
  ts::Rng rng(3);
  const auto ds = ts::random_dataset(3, 9, rng);
  const auto p = random_params(3, 3, rng, 1.0);
  const ThetaSubproblem sub(p.W, sig(), ds);
  EXPECT_NEAR(sub.value(p.theta), loss(p, sig(), ds), 1e-15);
  EXPECT_LE((sub.gradient(p.theta) - grad_theta(p, sig(), ds)).norm(), 1e-15);
  EXPECT_NEAR(sub.L_theta, lipschitz_theta_exact(p.W, sig(), ds), 1e-15);
}

TEST(ReferenceSolver, MatchesTrustRegionOracle) {
  Eigen::MatrixXd W(2, 3), U(5, 3);
  Eigen::VectorXd v(5);
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 3; ++k) W(j, k) = oracle::kW[j][k];
  for (int i = 0; i < 5; ++i)
    for (int k = 0; k < 3; ++k) U(i, k) = oracle::kU[i][k];
  for (int i = 0; i < 5; ++i) v[i] = oracle::kV[i];
  const Dataset ds(U, v);
  for (const auto& ref : oracle::kThetaStar) {
    const auto sol = reference_theta_star(W, builtin_activation(ref.act), ds, ref.radius);
    EXPECT_TRUE(sol.converged) << ref.act;
    EXPECT_LE(sol.grad_map_norm, 1e-12);
    EXPECT_NEAR(sol.f, ref.f, 1e-13) << ref.act << " radius " << ref.radius;
    EXPECT_NEAR(sol.theta[0], ref.theta[0], 1e-9) << ref.act;
    EXPECT_NEAR(sol.theta[1], ref.theta[1], 1e-9) << ref.act;
    EXPECT_LE(sol.theta.norm(), ref.radius);
  }
}

TEST(InnerSgd, StationaryAtInteriorMinimizer) {
  ts::Rng rng(4);
  const auto ds = ts::random_dataset(3, 9, rng);
  const auto W = ts::gaussian(3, 3, 1.0, rng);
  const ThetaSubproblem sub(W, sig(), ds);
  const Eigen::VectorXd star = sub.G.ldlt().solve(sub.b);
  RunConfig cfg;
  cfg.R = 4.0 * star.norm() + 2.0;
  cfg.sigma = 0.0;
  cfg.N_i = 200;
  Rng r(1);
  const auto res = inner_sgd(NetworkParams{W, star}, sig(), ds, cfg, r);
  EXPECT_LE((res.theta - star).norm(), 1e-10 * std::max(1.0, star.norm()));
  EXPECT_EQ(res.steps, 200u);
}

TEST(InnerSgd, NoiselessBound) {
  const auto ds = realizable(5);
  ts::Rng rng(5);
  const auto p = random_params(3, 3, rng, 1.0);
  RunConfig cfg;
  cfg.sigma = 0.0;
  cfg.N_i = 5000;
  const auto ref = reference_theta_star(p.W, sig(), ds, cfg.radius());
  Rng r(2);
  const auto res = inner_sgd(p, sig(), ds, cfg, r);
  EXPECT_DOUBLE_EQ(res.beta, 1.0 / (2.0 * res.L_theta));
  const double K0 = (p.theta - ref.theta).squaredNorm() / res.sum_beta;
  EXPECT_LE(res.final_f - ref.f, K0);
  EXPECT_GE(res.final_f - ref.f, -1e-14);
  EXPECT_NEAR(res.sum_beta, 5000 * res.beta, 1e-9);
}

TEST(InnerSgd, FeasibleIterates) {
  const auto ds = realizable(6);
  ts::Rng rng(6);
  RunConfig cfg;
  cfg.R = 0.5;
  cfg.sigma = 3.0;
  cfg.N_i = 50;
  for (int t = 0; t < 50; ++t) {
    const auto p = random_params(3, 3, rng, cfg.radius());
    Rng r(t);
    const auto res = inner_sgd(p, sig(), ds, cfg, r);
    EXPECT_LE(res.theta.norm(), cfg.radius());
    EXPECT_LE(res.theta_last.norm(), cfg.radius());
  }
}

TEST(InnerSgd, BetaPolicy) {
  RunConfig cfg;
  cfg.N_i = 100;
  cfg.sigma = 0.1;
  EXPECT_DOUBLE_EQ(resolve_beta(cfg, 2.0), 0.25);
  cfg.sigma = 1.0;
  EXPECT_DOUBLE_EQ(resolve_beta(cfg, 2.0), 0.1);
  cfg.beta_policy = BetaPolicy::fixed;
  cfg.beta = 0.25;
  EXPECT_DOUBLE_EQ(resolve_beta(cfg, 2.0), 0.25);
  cfg.beta = 0.26;
  EXPECT_THROW(resolve_beta(cfg, 2.0), ConfigError);
  cfg.beta = 0.0;
  EXPECT_THROW(resolve_beta(cfg, 2.0), ConfigError);

  const auto ds = realizable(7);
  ts::Rng rng(7);
  const auto p = random_params(3, 3, rng, 1.0);
  cfg.beta = 1.0;
  Rng r(1);
  EXPECT_THROW(inner_sgd(p, sig(), ds, cfg, r), ConfigError);
}

TEST(InnerSgd, EarlyExitContract) {
  const auto ds = realizable(8);
  ts::Rng rng(8);
  RunConfig cfg;
  cfg.early_exit = true;
  cfg.sigma = 0.5;
  cfg.N_i = 100;
  std::size_t fired = 0;
  for (int t = 0; t < 100; ++t) {
    const auto p = random_params(3, 3, rng, 1.0);
    Rng r(t);
    const auto res = inner_sgd(p, sig(), ds, cfg, r);
    if (res.early_exited) {
      ++fired;
      EXPECT_LE(res.final_f, loss(p, sig(), ds));
      EXPECT_LE(res.steps, cfg.N_i);
      EXPECT_DOUBLE_EQ(res.start_f, loss(p, sig(), ds));
    }
    EXPECT_NEAR(res.final_f, loss({p.W, res.theta}, sig(), ds), 1e-15);
  }
  EXPECT_GT(fired, 0u);
}

TEST(OuterStep, Examples) {
  ts::Rng rng(9);
  const auto U = ts::uniform(9, 3, -1.0, 1.0, rng);
  NetworkParams p{ts::gaussian(3, 3, 1.0, rng), ts::gaussian(3, 1, 0.5, rng).col(0)};
  const auto exact = label_with_teacher(U, Teacher{p, "sigmoid"});
  const double L = lipschitz_W_bound_on_ball(sig(), exact, 1.0);
  EXPECT_EQ(outer_step(p, sig(), exact, 1.0 / L, L).W, p.W);
  EXPECT_EQ(outer_step(p, sig(), exact, 1.0 / L, L).theta, p.theta);
  EXPECT_THROW(outer_step(p, sig(), exact, 2.0 / L, L), ConfigError);
  EXPECT_THROW(outer_step(p, sig(), exact, 0.0, L), ConfigError);
  EXPECT_THROW(outer_step(p, sig(), exact, 1.0, std::numeric_limits<double>::infinity()),
               ConfigError);
}

TEST(OuterStep, DescentLemmaAndMidpoint) {
  ts::Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    const auto ds = ts::random_dataset(3, 9, rng);
    const auto p = random_params(3, 3, rng, 1.0);
    const double L = lipschitz_W_bound(sig(), ds, p.theta.cwiseAbs().maxCoeff(), p.theta.norm());
    const double gamma = ts::uniform(1, 1, 0.05, 1.95, rng)(0, 0) / L;
    const auto g = grad_W(p, sig(), ds);
    const auto q = outer_step(p, sig(), ds, gamma, L);
    EXPECT_LE(loss(q, sig(), ds),
              loss(p, sig(), ds) - (gamma - L * gamma * gamma / 2) * g.squaredNorm() + 1e-8);
    const auto half = outer_step(p, sig(), ds, gamma / 2, L);
    EXPECT_LE((half.W - (p.W + q.W) / 2).norm(), 1e-14 * std::max(1.0, p.W.norm()));
  }
}

TEST(Run, ZeroOuterIterations) {
  const auto ds = realizable(11);
  RunConfig cfg;
  cfg.N_o = 0;
  const auto r = run(sig(), ds, cfg);
  ASSERT_EQ(r.trajectory.rows.size(), 1u);
  EXPECT_EQ(r.params.W, r.initial.W);
  EXPECT_EQ(r.params.theta, r.initial.theta);
  EXPECT_DOUBLE_EQ(r.trajectory.rows[0].f, loss(r.initial, sig(), ds));
}

TEST(Run, ShapeAndTelemetry) {
  const auto ds = realizable(12);
  RunConfig cfg;
  cfg.N_o = 25;
  cfg.N_i = 20;
  cfg.seed = 3;
  const auto r = run(sig(), ds, cfg);
  ASSERT_EQ(r.trajectory.rows.size(), 26u);
  const double L = lipschitz_W_bound_on_ball(sig(), ds, cfg.radius());
  EXPECT_DOUBLE_EQ(r.info.L, L);
  EXPECT_DOUBLE_EQ(r.info.gamma, 1.0 / L);
  EXPECT_DOUBLE_EQ(r.info.f0, loss(r.initial, sig(), ds));
  for (std::size_t k = 0; k < r.trajectory.rows.size(); ++k) {
    const auto& row = r.trajectory.rows[k];
    EXPECT_EQ(row.k, k);
    for (double x : {row.f, row.grad_norm_F, row.sigma_min_W, row.sigma_min_D, row.resid_norm})
      EXPECT_TRUE(std::isfinite(x));
    EXPECT_NEAR(row.resid_norm, std::sqrt(2.0 * 9.0 * row.f), 1e-12);
  }
  EXPECT_NEAR(r.trajectory.rows.back().f, loss(r.params, sig(), ds), 1e-15);
  EXPECT_NEAR(r.trajectory.rows.back().grad_norm_F, grad_W(r.params, sig(), ds).norm(), 1e-15);
  EXPECT_NEAR(r.trajectory.rows.back().sigma_min_W, svd_rank(r.params.W).sigma_min, 1e-15);
  EXPECT_LE(r.params.theta.norm(), cfg.radius());
}

TEST(Run, InitializationContract) {
  RunConfig cfg;
  cfg.init.theta_scale = 10.0;
  Rng a(4), b(4);
  const auto p = initialize(3, 3, cfg, a);
  EXPECT_LE(p.theta.norm(), cfg.radius());
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(3.0));
  Eigen::MatrixXd W(3, 3);
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) W(j, k) = n(b);
  EXPECT_EQ(p.W, W);
}

TEST(Run, Deterministic) {
  const auto ds = realizable(13);
  RunConfig cfg;
  cfg.N_o = 30;
  cfg.N_i = 15;
  cfg.seed = 42;
  const auto a = run(sig(), ds, cfg), b = run(sig(), ds, cfg);
  EXPECT_EQ(a.params.W, b.params.W);
  EXPECT_EQ(a.params.theta, b.params.theta);
  ASSERT_EQ(a.trajectory.rows.size(), b.trajectory.rows.size());
  for (std::size_t k = 0; k < a.trajectory.rows.size(); ++k) {
    EXPECT_EQ(a.trajectory.rows[k].f, b.trajectory.rows[k].f);
    EXPECT_EQ(a.trajectory.rows[k].sigma_min_D, b.trajectory.rows[k].sigma_min_D);
  }
  cfg.seed = 43;
  EXPECT_NE(run(sig(), ds, cfg).params.W, a.params.W);
}

TEST(Run, MonotoneWhenNoiseless) {
  const auto ds = realizable(14);
  for (bool early : {false, true}) {
    RunConfig cfg;
    cfg.N_o = 60;
    cfg.N_i = 500;
    cfg.sigma = 0.0;
    cfg.early_exit = early;
    const auto r = run(sig(), ds, cfg);
    for (std::size_t k = 0; k + 2 < r.trajectory.rows.size(); ++k)
      EXPECT_LE(r.trajectory.rows[k + 1].f, r.trajectory.rows[k].f + 1e-10) << "k=" << k;
    if (early) {
      EXPECT_GT(r.info.early_exits, 0u);
    }
  }
}

TEST(Run, GradTolStops) {
  const auto ds = realizable(15);
  RunConfig cfg;
  cfg.N_o = 100000;
  cfg.grad_tol = 1e-2;
  const auto r = run(sig(), ds, cfg);
  EXPECT_TRUE(r.info.stopped_on_grad_tol);
  EXPECT_LE(r.trajectory.rows.back().grad_norm_F, 1e-2);
  EXPECT_LT(r.trajectory.rows.size(), 100001u);
  EXPECT_NEAR(r.trajectory.rows.back().grad_norm_F, grad_W(r.params, sig(), ds).norm(), 1e-15);
}

TEST(Run, Theorem2Preset) {
  RunConfig cfg;
  cfg.theorem2_preset = true;
  cfg.N_o = 64;
  const auto res = cfg.resolved();
  EXPECT_EQ(res.N_i, 64u);
  EXPECT_DOUBLE_EQ(res.sigma, 0.125);
  EXPECT_EQ(res.gamma_policy, GammaPolicy::one_over_L);
  const auto r = run(sig(), realizable(16), cfg);
  EXPECT_EQ(r.info.config.N_i, 64u);
  EXPECT_DOUBLE_EQ(r.info.gamma, 1.0 / r.info.L);
}

TEST(Run, FlatHiddenLayer) {
  RunConfig cfg;
  cfg.N_o = 10;
  cfg.hidden = 2;
  const auto r = run(sig(), realizable(17, 4, 8), cfg);
  EXPECT_EQ(r.params.W.rows(), 2);
  EXPECT_EQ(r.params.W.cols(), 4);
}

TEST(Run, ConfigErrors) {
  const auto ds = realizable(18);
  RunConfig cfg;
  cfg.N_o = 2;
  cfg.gamma_policy = GammaPolicy::fixed;
  cfg.gamma = 1e9;
  EXPECT_THROW(run(sig(), ds, cfg), ConfigError);
  cfg = RunConfig{};
  cfg.R = 0.0;
  EXPECT_THROW(run(sig(), ds, cfg), ConfigError);
  cfg = RunConfig{};
  cfg.N_i = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.sigma = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  EXPECT_THROW(run(builtin_activation("softplus"), ds, cfg), ConfigError);
}

TEST(RunConfigJson, RoundTripAndStrictKeys) {
  RunConfig cfg;
  cfg.N_o = 7;
  cfg.sigma = 0.25;
  cfg.beta_policy = BetaPolicy::fixed;
  cfg.beta = 0.01;
  cfg.early_exit = true;
  cfg.seed = 99;
  cfg.hidden = 2;
  const auto back = run_config_from_json(run_config_to_json(cfg));
  EXPECT_EQ(back.N_o, 7u);
  EXPECT_EQ(back.sigma, 0.25);
  EXPECT_EQ(back.beta_policy, BetaPolicy::fixed);
  EXPECT_EQ(back.beta, 0.01);
  EXPECT_TRUE(back.early_exit);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.hidden, 2);
  EXPECT_THROW(run_config_from_json(R"({"N_outer": 3})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"N_o": "three"})"), ConfigError);
  EXPECT_THROW(run_config_from_json("{"), ConfigError);
  EXPECT_THROW(parse_beta_policy("adaptive"), ConfigError);
}

TEST(TrajectoryCsv, RoundTripAndErrors) {
  ts::TempDir dir;
  const auto r = [] {
    RunConfig cfg;
    cfg.N_o = 5;
    return run(sig(), realizable(19), cfg);
  }();
  write_trajectory_csv(r.trajectory, dir / "t.csv");
  const auto back = read_trajectory_csv(dir / "t.csv");
  ASSERT_EQ(back.rows.size(), r.trajectory.rows.size());
  for (std::size_t k = 0; k < back.rows.size(); ++k) {
    EXPECT_EQ(back.rows[k].f, r.trajectory.rows[k].f);
    EXPECT_EQ(back.rows[k].inner_steps, r.trajectory.rows[k].inner_steps);
  }
  {
    std::ofstream(dir / "bad.csv") << "x,y\n1,2\n";
  }
  EXPECT_THROW(read_trajectory_csv(dir / "bad.csv"), FormatError);
  EXPECT_THROW(read_trajectory_csv(dir / "none.csv"), IoError);
  EXPECT_EQ(trajectory_columns().front(), "k");
  EXPECT_EQ(trajectory_columns().size(), 8u);
}
