#include "twolayer/diagnostics.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "twolayer/errors.hpp"
#include "twolayer/model.hpp"

namespace twolayer {

RankReport svd_rank(const Eigen::MatrixXd& M, double rank_tol) {
  if (!(rank_tol > 0.0 && rank_tol < 1.0)) throw ConfigError("svd_rank: rank_tol must be in (0, 1)");
  if (!M.allFinite()) throw NumericsError("svd_rank: matrix has non-finite entries");

  RankReport r;
  r.rows = M.rows();
  r.cols = M.cols();
  r.rank_tol = rank_tol;
  if (M.size() == 0) return r;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  r.singular_values = svd.singularValues();  // already descending
  r.sigma_max = r.singular_values[0];
  r.sigma_min = r.singular_values[r.singular_values.size() - 1];
  const double cutoff = rank_tol * r.sigma_max;
  for (Eigen::Index i = 0; i < r.singular_values.size(); ++i) {
    if (r.singular_values[i] > cutoff) ++r.numerical_rank;
  }
  return r;
}

Eigen::MatrixXd feature_collection(const ActivationFunction& a,
                                   const std::optional<Eigen::MatrixXd>& W,
                                   const Eigen::MatrixXd& inputs) {
  const auto d = inputs.cols();
  const auto N = inputs.rows();
  if (N < 1) throw ShapeError("feature_collection: need at least one input");
  if (W && (W->cols() != d || W->rows() < 1 || W->rows() > d)) {
    throw ShapeError("feature_collection: W must be n x d with 1 <= n <= d");
  }
  const Eigen::MatrixXd pre = W ? Eigen::MatrixXd(inputs * W->transpose()) : inputs;
  const auto n = pre.cols();
  Eigen::MatrixXd F(n * d, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double hz = a.eval(pre(i, j));
      for (Eigen::Index k = 0; k < d; ++k) F(j * d + k, i) = hz * inputs(i, k);
    }
  }
  return F;
}

RankReport collection_rank(const ActivationFunction& a, const std::optional<Eigen::MatrixXd>& W,
                           const Eigen::MatrixXd& inputs, double rank_tol) {
  return svd_rank(feature_collection(a, W, inputs), rank_tol);
}

double lipschitz_W_bound(const ActivationFunction& a, const Dataset& ds, double theta_max,
                         double theta_norm) {
  double s1 = 0.0;
  double s2 = 0.0;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const double sq = ds.inputs().row(i).squaredNorm();
    s1 += sq * std::abs(ds.label(i));
    s2 += sq;
  }
  if (theta_max == 0.0 || s2 == 0.0) return 0.0;
  const double d = static_cast<double>(ds.dim());
  const double first = a.deriv_lipschitz() == 0.0 || s1 == 0.0 ? 0.0 : a.deriv_lipschitz() * s1;
  const double second =
      theta_norm == 0.0 ? 0.0 : std::sqrt(2.0 * d) * a.grad_H_bound() * theta_norm * s2;
  return theta_max * (first + second) / static_cast<double>(ds.size());
}

double lipschitz_W_bound_on_ball(const ActivationFunction& a, const Dataset& ds, double radius) {
  if (!(radius > 0.0)) throw ConfigError("lipschitz_W_bound_on_ball: radius must be > 0");
  return lipschitz_W_bound(a, ds, radius, radius);
}

double lipschitz_theta_exact(const Eigen::MatrixXd& W, const ActivationFunction& a,
                             const Dataset& ds) {
  const auto hl = hidden_layer(W, a, ds.inputs());
  const Eigen::MatrixXd gram = hl.act.transpose() * hl.act / static_cast<double>(ds.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  return std::max(0.0, eig.eigenvalues().maxCoeff());
}

LipschitzEstimate lipschitz_estimates(const NetworkParams& p, const ActivationFunction& a,
                                      const Dataset& ds) {
  check_shapes(p, ds);
  LipschitzEstimate est;
  auto& sum = est.inputs_summary;
  sum.theta_max = p.theta.cwiseAbs().maxCoeff();
  sum.theta_norm = p.theta.norm();
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const double sq = ds.inputs().row(i).squaredNorm();
    sum.sum_sq_norm_abs_label += sq * std::abs(ds.label(i));
    sum.sum_sq_norm += sq;
  }
  est.L_W_bound = lipschitz_W_bound(a, ds, sum.theta_max, sum.theta_norm);
  est.L_theta_exact = lipschitz_theta_exact(p.W, a, ds);
  if (a.value_bound()) {
    const double u = *a.value_bound();
    est.L_theta_bound_analytic = u * u * static_cast<double>(p.hidden());
  }
  return est;
}

std::string to_string(CertificateVerdict v) {
  switch (v) {
    case CertificateVerdict::certified_near_global:
      return "certified_near_global";
    case CertificateVerdict::rank_deficient:
      return "rank_deficient";
    case CertificateVerdict::inconclusive:
      return "inconclusive";
  }
  return "inconclusive";
}

GlobalCertificate certify(const NetworkParams& p, const ActivationFunction& a, const Dataset& ds,
                          double rank_tol) {
  check_shapes(p, ds);
  const auto sys = stationarity_system(p, a, ds);
  const auto N = ds.size();
  const Eigen::MatrixXd g = grad_W(p, a, ds);
  const auto D_report = svd_rank(sys.D, rank_tol);
  const auto W_report = svd_rank(p.W, rank_tol);

  GlobalCertificate c;
  c.rank_tol = rank_tol;
  c.samples = N;
  c.grad_norm = g.norm();
  c.residual_norm = sys.s.norm();
  c.loss_value = sys.s.squaredNorm() / (2.0 * static_cast<double>(N));
  c.sigma_max_D = D_report.sigma_max;
  c.D_rank = D_report.numerical_rank;
  c.sigma_min_W = W_report.sigma_min;
  // Column rank needs N <= nd; otherwise the N-th singular value is zero.
  c.sigma_min_D = N <= sys.D.rows() ? D_report.singular_values[N - 1] : 0.0;
  c.certified_bound = c.sigma_min_D > 0.0 ? static_cast<double>(N) * c.grad_norm / c.sigma_min_D
                                          : std::numeric_limits<double>::infinity();

  const bool zero_theta = (p.theta.array() == 0.0).any();
  if (zero_theta || !D_report.full_column_rank()) {
    c.verdict = CertificateVerdict::rank_deficient;
  } else if (!std::isfinite(c.certified_bound)) {
    c.verdict = CertificateVerdict::inconclusive;
  } else {
    c.verdict = CertificateVerdict::certified_near_global;
  }
  return c;
}

PerturbationTrialResult perturbation_rank_trial(const Eigen::MatrixXd& W_base,
                                                const Eigen::MatrixXd& Z,
                                                const ActivationFunction& a,
                                                const Eigen::MatrixXd& inputs, std::size_t trials,
                                                std::uint64_t seed, double rank_tol) {
  if (trials == 0) throw ConfigError("perturbation_rank_trial: trials must be >= 1");
  const auto d = inputs.cols();
  if (W_base.rows() != d || W_base.cols() != d || Z.rows() != d || Z.cols() != d) {
    throw ShapeError("perturbation_rank_trial: W' and Z must be d x d with d = input dimension");
  }
  if ((Z.array() == 0.0).all()) throw ConfigError("perturbation_rank_trial: Z must be nonzero");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  PerturbationTrialResult res;
  res.trials = trials;
  Eigen::VectorXd v(d);
  for (std::size_t t = 0; t < trials; ++t) {
    for (Eigen::Index k = 0; k < d; ++k) v[k] = normal(rng);
    const Eigen::MatrixXd W = W_base + v.asDiagonal() * Z;
    if (!svd_rank(W, rank_tol).full_rank()) continue;
    ++res.nonsingular;
    if (collection_rank(a, W, inputs, rank_tol).full_rank()) ++res.full_rank;
  }
  res.fraction = res.nonsingular == 0
                     ? 0.0
                     : static_cast<double>(res.full_rank) / static_cast<double>(res.nonsingular);
  return res;
}

}  // namespace twolayer
