#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "parallel.hpp"
#include "twolayer/errors.hpp"
#include "twolayer/harness.hpp"
#include "twolayer/model.hpp"

namespace twolayer {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-6;
// Denominator floor for entrywise relative errors, so entries that vanish
// analytically are compared absolutely.
constexpr double kRelFloor = 1e-8;

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kRelFloor});
}

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, double sd, Rng& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  Eigen::MatrixXd M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = normal(rng);
  return M;
}

Eigen::Index uniform_int(Eigen::Index lo, Eigen::Index hi, Rng& rng) {
  return std::uniform_int_distribution<Eigen::Index>(lo, hi)(rng);
}

Eigen::VectorXd in_ball(Eigen::Index n, double radius, Rng& rng) {
  Eigen::VectorXd v = gaussian(n, 1, 1.0, rng);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  v *= radius * std::pow(u, 1.0 / static_cast<double>(n)) / v.norm();
  return prox_ball(v, Eigen::VectorXd::Zero(n), radius);
}

Dataset random_dataset(Eigen::Index d, Eigen::Index N, Rng& rng) {
  std::uniform_int_distribution<std::uint64_t> seeds;
  const auto U = generate_inputs(d, N, InputDistribution::uniform_cube, seeds(rng));
  return Dataset(U, gaussian(N, 1, 1.0, rng).col(0));
}

Check make_check(std::string name, double measured, std::string relation, double threshold) {
  Check c;
  c.name = std::move(name);
  c.measured = measured;
  c.relation = relation;
  c.threshold = threshold;
  if (relation == "<=") c.passed = measured <= threshold;
  else if (relation == ">=") c.passed = measured >= threshold;
  else if (relation == "<") c.passed = measured < threshold;
  else c.passed = measured > threshold;
  return c;
}

std::size_t trials_or(const ExperimentSpec& spec, std::size_t def) {
  return spec.trials.value_or(def);
}

std::uint64_t suite_seed(const ExperimentSpec& spec, std::uint64_t salt) {
  return spec.run.seed * 0x9E3779B97F4A7C15ull + salt;
}

const ActivationFunction& linear() { return builtin_activation("linear"); }

// ---------------------------------------------------------------- gradcheck

std::vector<Check> suite_gradcheck(const ExperimentSpec& spec) {
  const auto& a = builtin_activation(spec.activation);
  Rng rng(suite_seed(spec, 1));
  double worst_W = 0.0, worst_theta = 0.0;
  const auto trials = trials_or(spec, 20);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto d = uniform_int(1, 5, rng);
    const auto n = uniform_int(1, d, rng);
    const auto N = uniform_int(1, 25, rng);
    const auto ds = random_dataset(d, N, rng);
    NetworkParams p{gaussian(n, d, 1.0 / std::sqrt(static_cast<double>(d)), rng),
                    gaussian(n, 1, 1.0, rng).col(0)};
    const auto gW = grad_W(p, a, ds);
    const auto gt = grad_theta(p, a, ds);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index k = 0; k < d; ++k) {
        auto plus = p, minus = p;
        plus.W(j, k) += kFdStep;
        minus.W(j, k) -= kFdStep;
        const double fd = (loss(plus, a, ds) - loss(minus, a, ds)) / (2 * kFdStep);
        worst_W = std::max(worst_W, rel_err(gW(j, k), fd));
      }
      auto plus = p, minus = p;
      plus.theta[j] += kFdStep;
      minus.theta[j] -= kFdStep;
      const double fd = (loss(plus, a, ds) - loss(minus, a, ds)) / (2 * kFdStep);
      worst_theta = std::max(worst_theta, rel_err(gt[j], fd));
    }
  }
  auto c1 = make_check("grad_W max relative error vs central differences", worst_W, "<=", kFdTol);
  auto c2 = make_check("grad_theta max relative error vs central differences", worst_theta, "<=",
                       kFdTol);
  c1.details["instances"] = c2.details["instances"] = static_cast<double>(trials);
  c1.details["fd_step"] = c2.details["fd_step"] = kFdStep;
  return {c1, c2};
}

// ------------------------------------------------------------- stationarity

std::vector<Check> suite_stationarity(const ExperimentSpec& spec) {
  const auto& a = builtin_activation(spec.activation);
  Rng rng(suite_seed(spec, 2));
  double worst = 0.0;
  const auto trials = trials_or(spec, 100);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto d = uniform_int(1, 5, rng);
    const auto n = uniform_int(1, d, rng);
    const auto N = uniform_int(1, 25, rng);
    const auto ds = random_dataset(d, N, rng);
    NetworkParams p{gaussian(n, d, 1.0, rng), gaussian(n, 1, 1.0, rng).col(0)};
    const auto sys = stationarity_system(p, a, ds);
    const Eigen::VectorXd g = vect_rows(grad_W(p, a, ds));
    const Eigen::VectorXd id = -(sys.D * sys.s) / static_cast<double>(N);
    worst = std::max(worst, (g - id).norm() / std::max(g.norm(), 1e-300));
  }
  auto c = make_check("max relative error of vect(grad_W) = -(1/N) D s", worst, "<=", 1e-10);
  c.details["instances"] = static_cast<double>(trials);
  return {c};
}

// --------------------------------------------------------------------- rank

std::vector<Check> suite_rank(const ExperimentSpec& spec) {
  const auto& a = builtin_activation(spec.activation);
  const auto trials = trials_or(spec, 100);
  const double tol = spec.rank_tol;
  std::vector<Check> out;
  for (Eigen::Index d : {2, 3}) {
    std::size_t full_I = 0, full_W = 0, deficient_I = 0, deficient_W = 0;
    for (std::size_t s = 0; s < trials; ++s) {
      Rng rng(suite_seed(spec, 300 + static_cast<std::uint64_t>(d) * 1000 + s));
      const auto U = generate_inputs(d, d * d, InputDistribution::uniform_cube, rng());
      Eigen::MatrixXd W;
      do {
        W = gaussian(d, d, 1.0, rng);
      } while (!svd_rank(W, tol).full_rank());
      const bool fi = collection_rank(a, std::nullopt, U, tol).full_rank();
      const bool fw = collection_rank(a, W, U, tol).full_rank();
      full_I += fi;
      full_W += fw;
      deficient_I += !fi;
      deficient_W += !fw;
    }
    const double n = static_cast<double>(trials);
    const std::string dims = "d=" + std::to_string(d) + ", N=" + std::to_string(d * d);
    if (a.claimed_c1()) {
      out.push_back(make_check("full-rank fraction, W = I, " + dims, full_I / n, ">=", 1.0));
      out.push_back(make_check("full-rank fraction, random nonsingular W, " + dims, full_W / n,
                               ">=", 1.0));
    } else {
      // Non-C1 activation: the designed expectation is rank deficiency.
      out.push_back(make_check("rank-deficient fraction (expected), W = I, " + dims,
                               deficient_I / n, ">=", 1.0));
      out.push_back(make_check("rank-deficient fraction (expected), random W, " + dims,
                               deficient_W / n, ">=", 1.0));
    }
  }
  // Negative control: vect(u u^T) spans only the symmetric subspace.
  std::size_t low = 0;
  Eigen::Index worst_rank = 0;
  for (std::size_t s = 0; s < trials; ++s) {
    Rng rng(suite_seed(spec, 390000 + s));
    const auto U = generate_inputs(2, 4, InputDistribution::uniform_cube, rng());
    const auto r = collection_rank(linear(), std::nullopt, U, tol);
    worst_rank = std::max(worst_rank, r.numerical_rank);
    low += r.numerical_rank <= 3;
  }
  auto c = make_check("linear control: fraction with rank <= 3 (d=2, N=4)",
                      static_cast<double>(low) / static_cast<double>(trials), ">=", 1.0);
  c.details["max_rank_seen"] = static_cast<double>(worst_rank);
  out.push_back(c);
  return out;
}

// ------------------------------------------------------------- perturbation

std::vector<Check> suite_perturbation(const ExperimentSpec& spec) {
  const auto& a = builtin_activation(spec.activation);
  const auto trials = trials_or(spec, 100);
  std::vector<Check> out;
  for (Eigen::Index d : {2, 3}) {
    Rng rng(suite_seed(spec, 500 + static_cast<std::uint64_t>(d)));
    const auto U = generate_inputs(d, d * d, InputDistribution::uniform_cube, rng());
    const Eigen::MatrixXd Wp = gaussian(d, d, 1.0, rng);
    // Z: one random nonzero row.
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(d, d);
    Z.row(uniform_int(0, d - 1, rng)) = gaussian(1, d, 1.0, rng);
    const auto seed = rng();
    const std::string dims = "d=" + std::to_string(d) + ", N=" + std::to_string(d * d);
    const auto res = perturbation_rank_trial(Wp, Z, a, U, trials, seed, spec.rank_tol);
    auto c = a.claimed_c1()
                 ? make_check("full-rank fraction, " + dims, res.fraction, ">=", 1.0)
                 : make_check("full-rank fraction (non-C1, expected 0), " + dims, res.fraction,
                              "<=", 0.0);
    c.details["nonsingular_draws"] = static_cast<double>(res.nonsingular);
    out.push_back(c);
    const auto ctl = perturbation_rank_trial(Wp, Z, linear(), U, trials, seed, spec.rank_tol);
    auto cc = make_check("linear control full-rank fraction, " + dims, ctl.fraction, "<=", 0.0);
    cc.details["nonsingular_draws"] = static_cast<double>(ctl.nonsingular);
    out.push_back(cc);
  }
  return out;
}

// --------------------------------------------------------------- trajectory

std::vector<Check> suite_trajectory(const ExperimentSpec& spec, const Dataset& ds,
                                    unsigned threads) {
  const auto& a = builtin_activation(spec.activation);
  const auto seeds = trials_or(spec, 20);
  std::vector<double> mins(seeds);
  detail::parallel_for(seeds, threads, [&](std::size_t s) {
    RunConfig cfg = spec.run;
    cfg.N_o = 200;
    cfg.seed = spec.run.seed + s;
    const auto r = run(a, ds, cfg);
    double m = std::numeric_limits<double>::infinity();
    for (const auto& row : r.trajectory.rows) m = std::min(m, row.sigma_min_W);
    mins[s] = m;
  });
  auto c = make_check("min over runs and k of sigma_min(W_k)",
                      *std::min_element(mins.begin(), mins.end()), ">", 1e-12);
  c.details["runs"] = static_cast<double>(seeds);
  c.details["outer_iterations"] = 200;
  return {c};
}

// ---------------------------------------------------------------- lipschitz

std::vector<Check> suite_lipschitz(const ExperimentSpec& spec) {
  const auto& a = builtin_activation(spec.activation);
  const auto trials = trials_or(spec, 1000);
  Rng rng(suite_seed(spec, 6));
  const double radius = spec.run.radius();
  std::size_t viol_W = 0, viol_theta = 0, viol_order = 0, order_checked = 0;
  double worst_W = 0.0, worst_theta = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto d = uniform_int(1, 4, rng);
    const auto n = uniform_int(1, d, rng);
    const auto N = uniform_int(1, 16, rng);
    const auto ds = random_dataset(d, N, rng);
    const Eigen::VectorXd theta = in_ball(n, radius, rng);
    const Eigen::MatrixXd W1 = gaussian(n, d, 1.0, rng);
    const Eigen::MatrixXd W2 = gaussian(n, d, 1.0, rng);
    const NetworkParams p1{W1, theta}, p2{W2, theta};
    const double L = lipschitz_W_bound(a, ds, theta.cwiseAbs().maxCoeff(), theta.norm());
    const double ratio = (grad_W(p1, a, ds) - grad_W(p2, a, ds)).norm() / (W1 - W2).norm();
    if (ratio > L) ++viol_W;
    if (std::isfinite(L) && L > 0) worst_W = std::max(worst_W, ratio / L);

    const Eigen::VectorXd t1 = in_ball(n, radius, rng), t2 = in_ball(n, radius, rng);
    const auto est = lipschitz_estimates(NetworkParams{W1, t1}, a, ds);
    const double lhs =
        (grad_theta(NetworkParams{W1, t1}, a, ds) - grad_theta(NetworkParams{W1, t2}, a, ds))
            .norm();
    const double rhs = est.L_theta_exact * (t1 - t2).norm();
    // Affine gradient: equality is attainable, so allow rounding in the product.
    if (lhs > rhs * (1.0 + 1e-12) + 1e-15) ++viol_theta;
    if (rhs > 0) worst_theta = std::max(worst_theta, lhs / rhs);
    if (est.L_theta_bound_analytic) {
      ++order_checked;
      if (est.L_theta_exact > *est.L_theta_bound_analytic) ++viol_order;
    }
  }
  auto c1 = make_check("violations of the W-gradient Lipschitz bound", static_cast<double>(viol_W),
                       "<=", 0.0);
  c1.details["samples"] = static_cast<double>(trials);
  c1.details["max_ratio_over_bound"] = worst_W;
  auto c2 = make_check("violations of the theta-gradient Lipschitz inequality",
                       static_cast<double>(viol_theta), "<=", 0.0);
  c2.details["samples"] = static_cast<double>(trials);
  c2.details["max_ratio_over_L_theta"] = worst_theta;
  auto c3 = make_check("violations of L_theta_exact <= u^2 n", static_cast<double>(viol_order),
                       "<=", 0.0);
  c3.details["samples_with_bounded_h"] = static_cast<double>(order_checked);
  return {c1, c2, c3};
}

// ----------------------------------------------------------------- theorem1

std::vector<Check> suite_theorem1(const ExperimentSpec& spec, const Dataset& ds,
                                  unsigned threads) {
  const auto& a = builtin_activation(spec.activation);
  const auto seeds = trials_or(spec, 1000);
  Rng init_rng(spec.run.seed);
  RunConfig base = spec.run;
  const auto p = initialize(base.hidden.value_or(ds.dim()), ds.dim(), base, init_rng);
  const auto ref = reference_theta_star(p.W, a, ds, base.radius());
  std::vector<Check> out;
  auto cref = make_check("reference solver gradient-map norm", ref.grad_map_norm, "<=", 1e-12);
  cref.details["iterations"] = static_cast<double>(ref.iterations);
  out.push_back(cref);

  for (std::size_t Ni : {10u, 100u}) {
    RunConfig cfg = base;
    cfg.N_i = Ni;
    cfg.sigma = 1.0;
    cfg.beta_policy = BetaPolicy::constant_opt;
    cfg.early_exit = false;
    std::vector<double> gaps(seeds);
    std::vector<double> K0(seeds);
    detail::parallel_for(seeds, threads, [&](std::size_t s) {
      Rng rng(spec.run.seed + 1000003ull * (s + 1));
      const auto inner = inner_sgd(p, a, ds, cfg, rng);
      gaps[s] = inner.final_f - ref.f;
      K0[s] = ((p.theta - ref.theta).squaredNorm() + cfg.sigma * cfg.sigma * inner.sum_beta_sq) /
              inner.sum_beta;
    });
    double mean = 0.0;
    for (double g : gaps) mean += g;
    mean /= static_cast<double>(seeds);
    auto c = make_check("mean f(theta_av) - f(theta*) over seeds, N_i=" + std::to_string(Ni), mean,
                        "<=", 1.1 * K0.front());
    c.details["K0"] = K0.front();
    c.details["sigma"] = cfg.sigma;
    c.details["beta"] = resolve_beta(cfg, ThetaSubproblem(p.W, a, ds).L_theta);
    c.details["seeds"] = static_cast<double>(seeds);
    out.push_back(c);
  }
  return out;
}

// ----------------------------------------------------------------- theorem2

std::vector<Check> suite_theorem2(const ExperimentSpec& spec, const Dataset& ds,
                                  unsigned threads) {
  const auto& a = builtin_activation(spec.activation);
  const auto seeds = trials_or(spec, 50);
  std::vector<Check> out;
  for (std::size_t No : {50u, 200u}) {
    std::vector<double> min_g2(seeds), bound(seeds);
    detail::parallel_for(seeds, threads, [&](std::size_t s) {
      RunConfig cfg = spec.run;
      cfg.theorem2_preset = true;
      cfg.N_o = No;
      cfg.grad_tol = 0.0;
      cfg.seed = spec.run.seed + s;
      const auto r = run(a, ds, cfg);
      double m = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < No; ++k) {
        const double g = r.trajectory.rows[k].grad_norm_F;
        m = std::min(m, g * g);
      }
      min_g2[s] = m;
      const double R = cfg.R;
      bound[s] = 2.0 * r.info.L * (r.info.f0 + R * R * (r.info.L_theta_max + 0.5) + 1.0) /
                 static_cast<double>(No);
    });
    double mean = 0.0, bound_mean = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
      mean += min_g2[s];
      bound_mean += bound[s];
    }
    mean /= static_cast<double>(seeds);
    bound_mean /= static_cast<double>(seeds);
    // Compare with the smallest per-seed bound, the strictest reading.
    const double bmin = *std::min_element(bound.begin(), bound.end());
    auto c = make_check("mean min_k ||grad_W f||_F^2, N_o=" + std::to_string(No), mean, "<=", bmin);
    c.details["bound_mean_over_seeds"] = bound_mean;
    c.details["seeds"] = static_cast<double>(seeds);
    out.push_back(c);
  }
  return out;
}

// ------------------------------------------------------------------ certify

std::vector<Check> suite_certify(const ExperimentSpec& spec, const Dataset& ds, unsigned threads) {
  const auto& a = builtin_activation(spec.activation);
  const auto seeds = trials_or(spec, 5);
  std::vector<GlobalCertificate> certs(seeds);
  std::vector<double> rounds(seeds);
  detail::parallel_for(seeds, threads, [&](std::size_t s) {
    RunConfig cfg = spec.run;
    cfg.grad_tol = 1e-6;
    cfg.N_o = std::max<std::size_t>(cfg.N_o, 5000);
    cfg.seed = spec.run.seed + s;
    const auto r = run(a, ds, cfg);
    certs[s] = certify(r.params, a, ds, spec.rank_tol);
    rounds[s] = static_cast<double>(r.trajectory.rows.size());
  });
  std::size_t violations = 0, applicable = 0;
  double worst_slack = -std::numeric_limits<double>::infinity();
  double min_sigma = std::numeric_limits<double>::infinity();
  for (const auto& c : certs) {
    min_sigma = std::min(min_sigma, c.sigma_min_D);
    if (!(c.sigma_min_D > spec.rank_tol * c.sigma_max_D)) continue;
    ++applicable;
    const double slack = (c.residual_norm - c.certified_bound) / std::max(c.certified_bound, 1e-300);
    worst_slack = std::max(worst_slack, slack);
    if (c.residual_norm > c.certified_bound * (1.0 + 1e-8)) ++violations;
  }
  auto c1 = make_check("certificate violations ||s|| > N ||grad|| / sigma_min(D) (1e-8 rel)",
                       static_cast<double>(violations), "<=", 0.0);
  c1.details["runs"] = static_cast<double>(seeds);
  c1.details["runs_with_full_rank_D"] = static_cast<double>(applicable);
  c1.details["max_relative_slack"] = worst_slack;
  c1.details["min_sigma_min_D"] = min_sigma;
  c1.details["last_residual_norm"] = certs.back().residual_norm;
  c1.details["last_certified_bound"] = certs.back().certified_bound;
  c1.details["last_grad_norm"] = certs.back().grad_norm;
  auto c2 = make_check("runs where the certificate applies (full-rank D)",
                       static_cast<double>(applicable), ">=", 1.0);
  return {c1, c2};
}

// --------------------------------------------------------------------- prox

std::vector<Check> suite_prox(const ExperimentSpec& spec) {
  Rng rng(suite_seed(spec, 11));
  const auto trials = trials_or(spec, 10000);
  std::size_t infeasible = 0, suboptimal = 0;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto n = uniform_int(1, 8, rng);
    const double scale = std::pow(10.0, 2.0 * unif(rng) - 1.0);
    const Eigen::VectorXd x = gaussian(n, 1, scale, rng).col(0);
    const Eigen::VectorXd y = gaussian(n, 1, scale, rng).col(0);
    const double radius = 0.05 + 3.0 * unif(rng);
    const auto out = prox_ball(x, y, radius);
    if (out.norm() > radius) ++infeasible;
    auto obj = [&](const Eigen::VectorXd& z) { return y.dot(z - x) + 0.5 * (z - x).squaredNorm(); };
    const double at_out = obj(out);
    for (int k = 0; k < 100; ++k) {
      const auto z = in_ball(n, radius, rng);
      const double at_z = obj(z);
      if (at_out > at_z + 1e-12 * (1.0 + std::abs(at_z))) {
        ++suboptimal;
        break;
      }
    }
  }
  auto c1 = make_check("infeasible prox outputs", static_cast<double>(infeasible), "<=", 0.0);
  auto c2 = make_check("triples where a feasible z beats the prox output",
                       static_cast<double>(suboptimal), "<=", 0.0);
  c1.details["triples"] = c2.details["triples"] = static_cast<double>(trials);
  c2.details["feasible_points_per_triple"] = 100;
  return {c1, c2};
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"gradcheck",  "stationarity", "rank",
                                              "perturbation", "trajectory", "lipschitz",
                                              "theorem1",   "theorem2",     "certify",
                                              "prox"};
  return names;
}

SuiteReport run_suite(std::string_view suite, const ExperimentSpec& spec, unsigned threads) {
  const auto t0 = std::chrono::steady_clock::now();
  validate(spec);
  SuiteReport rep;
  rep.suite = std::string(suite);
  auto dataset = [&] { return materialize_dataset(spec.dataset); };
  if (suite == "gradcheck") rep.checks = suite_gradcheck(spec);
  else if (suite == "stationarity") rep.checks = suite_stationarity(spec);
  else if (suite == "rank") rep.checks = suite_rank(spec);
  else if (suite == "perturbation") rep.checks = suite_perturbation(spec);
  else if (suite == "trajectory") rep.checks = suite_trajectory(spec, dataset(), threads);
  else if (suite == "lipschitz") rep.checks = suite_lipschitz(spec);
  else if (suite == "theorem1") rep.checks = suite_theorem1(spec, dataset(), threads);
  else if (suite == "theorem2") rep.checks = suite_theorem2(spec, dataset(), threads);
  else if (suite == "certify") rep.checks = suite_certify(spec, dataset(), threads);
  else if (suite == "prox") rep.checks = suite_prox(spec);
  else throw ConfigError("unknown suite '" + std::string(suite) + "'");
  rep.passed = std::all_of(rep.checks.begin(), rep.checks.end(),
                           [](const Check& c) { return c.passed; });
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace twolayer
