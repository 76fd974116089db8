#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "twolayer/activations.hpp"
#include "twolayer/dataset.hpp"
#include "twolayer/network_params.hpp"

namespace twolayer {

/// Singular values below rank_tol * sigma_max count as zero.
inline constexpr double kDefaultRankTol = 1e-10;

struct RankReport {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  /// Descending, min(rows, cols) entries.
  Eigen::VectorXd singular_values;
  Eigen::Index numerical_rank = 0;
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  double rank_tol = kDefaultRankTol;

  bool full_rank() const noexcept { return numerical_rank == std::min(rows, cols); }
  bool full_column_rank() const noexcept { return numerical_rank == cols; }
};

/// NumericsError on non-finite entries, ConfigError unless 0 < rank_tol < 1.
RankReport svd_rank(const Eigen::MatrixXd& M, double rank_tol = kDefaultRankTol);

/// (n d) x N matrix whose column i is vect_rows(h(W u^i) u^i^T). An empty
/// optional stands for W = I (n = d).
Eigen::MatrixXd feature_collection(const ActivationFunction& a,
                                   const std::optional<Eigen::MatrixXd>& W,
                                   const Eigen::MatrixXd& inputs);

/// Rank of feature_collection(). ShapeError when W is not n x d with n <= d
/// or when there are no inputs.
RankReport collection_rank(const ActivationFunction& a, const std::optional<Eigen::MatrixXd>& W,
                           const Eigen::MatrixXd& inputs, double rank_tol = kDefaultRankTol);

struct LipschitzInputsSummary {
  double theta_max = 0.0;            // max_j |theta_j|
  double theta_norm = 0.0;           // ||theta||_2
  double sum_sq_norm_abs_label = 0.0;  // sum_i ||u^i||^2 |v^i|
  double sum_sq_norm = 0.0;          // sum_i ||u^i||^2
};

struct LipschitzEstimate {
  /// Smoothness bound of f(., theta) in W (Frobenius norms).
  double L_W_bound = 0.0;
  /// u^2 n, present only for bounded activations.
  std::optional<double> L_theta_bound_analytic;
  /// (1/N) lambda_max(sum_i h(W u^i) h(W u^i)^T); exact since f(W, .) is quadratic.
  double L_theta_exact = 0.0;
  LipschitzInputsSummary inputs_summary;
};

/// L_W = (1/N) theta_max (L_h' S1 + sqrt(2d) L_hh' ||theta|| S2) with
/// S1 = sum ||u||^2 |v| and S2 = sum ||u||^2. Infinite when the activation's
/// constants are.
double lipschitz_W_bound(const ActivationFunction& a, const Dataset& ds, double theta_max,
                         double theta_norm);

/// L_W_bound evaluated at the worst case over the ball ||theta|| <= radius,
/// i.e. theta_max = ||theta|| = radius. Constant across outer iterations.
double lipschitz_W_bound_on_ball(const ActivationFunction& a, const Dataset& ds, double radius);

double lipschitz_theta_exact(const Eigen::MatrixXd& W, const ActivationFunction& a,
                             const Dataset& ds);

LipschitzEstimate lipschitz_estimates(const NetworkParams& p, const ActivationFunction& a,
                                      const Dataset& ds);

enum class CertificateVerdict { certified_near_global, rank_deficient, inconclusive };
std::string to_string(CertificateVerdict v);

// ||D s|| = N ||grad_W f||_F, so full column rank of D gives
// ||s||_2 <= N ||grad_W f||_F / sigma_min(D).
struct GlobalCertificate {
  double grad_norm = 0.0;
  double sigma_min_D = 0.0;
  double sigma_max_D = 0.0;
  double residual_norm = 0.0;
  /// N * grad_norm / sigma_min_D; +inf when sigma_min_D == 0.
  double certified_bound = 0.0;
  double loss_value = 0.0;
  double sigma_min_W = 0.0;
  double rank_tol = kDefaultRankTol;
  Eigen::Index D_rank = 0;
  Eigen::Index samples = 0;
  CertificateVerdict verdict = CertificateVerdict::inconclusive;
};

/// rank_deficient when D lacks full column rank at rank_tol or some theta_j is
/// exactly 0; inconclusive when the bound is not finite; otherwise certified.
GlobalCertificate certify(const NetworkParams& p, const ActivationFunction& a, const Dataset& ds,
                          double rank_tol = kDefaultRankTol);

struct PerturbationTrialResult {
  std::size_t trials = 0;
  std::size_t nonsingular = 0;
  std::size_t full_rank = 0;
  /// full_rank / nonsingular (0 when no draw was nonsingular).
  double fraction = 0.0;
};

/// Draws v ~ N(0, I) `trials` times, forms W = W' + diag(v) Z and reports the
/// fraction of nonsingular draws whose feature collection has full rank.
/// ConfigError when trials == 0 or Z == 0; ShapeError unless W', Z are d x d
/// with d == inputs.cols().
PerturbationTrialResult perturbation_rank_trial(const Eigen::MatrixXd& W_base,
                                                const Eigen::MatrixXd& Z,
                                                const ActivationFunction& a,
                                                const Eigen::MatrixXd& inputs, std::size_t trials,
                                                std::uint64_t seed,
                                                double rank_tol = kDefaultRankTol);

}  // namespace twolayer
