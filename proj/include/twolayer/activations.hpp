#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace twolayer {

/// Scalar activation h with its first two derivatives and the constants the
/// smoothness estimates need. Immutable; safe to share across threads.
class ActivationFunction {
 public:
  using ScalarFn = double (*)(double);

  struct Definition {
    std::string name;
    ScalarFn eval = nullptr;
    ScalarFn deriv = nullptr;
    ScalarFn deriv2 = nullptr;
    /// sup |h|, absent for unbounded h.
    std::optional<double> value_bound;
    /// Lipschitz constant of h' (may be +inf).
    double deriv_lipschitz = 0.0;
    /// Bound on ||grad H||_2 for H(x1, x2) = h(x1) h'(x2) (may be +inf).
    double grad_H_bound = 0.0;
    bool claimed_c1 = false;
  };

  explicit ActivationFunction(Definition def);

  const std::string& name() const noexcept { return def_.name; }
  double eval(double x) const { return def_.eval(x); }
  double deriv(double x) const { return def_.deriv(x); }
  double deriv2(double x) const { return def_.deriv2(x); }
  const std::optional<double>& value_bound() const noexcept { return def_.value_bound; }
  double deriv_lipschitz() const noexcept { return def_.deriv_lipschitz; }
  double grad_H_bound() const noexcept { return def_.grad_H_bound; }
  bool claimed_c1() const noexcept { return def_.claimed_c1; }

 private:
  Definition def_;
};

/// Names accepted by builtin_activation(), in a stable order.
const std::vector<std::string>& builtin_activation_names();

/// Throws NameError for names outside builtin_activation_names().
const ActivationFunction& builtin_activation(std::string_view name);

/// Componentwise h(z). Throws NumericsError on a non-finite component.
Eigen::VectorXd vector_apply(const ActivationFunction& a, const Eigen::VectorXd& z);
/// Componentwise h'(z). Same error contract as vector_apply.
Eigen::VectorXd vector_apply_deriv(const ActivationFunction& a, const Eigen::VectorXd& z);

// Condition C1 probe.
//
// Heuristic only: on a grid over each interval it least-squares fits
//   (i)  h'(x) = c1
//   (ii) x h'(x) + h(x) = c3 - c2 h'(x)
// and flags the interval when either family fits to within `tol`.
// Residuals are scale-normalized: family (i) by max |h'| on the grid,
// family (ii) by the spread max |y - mean(y)| of y = x h' + h. An exactly
// fitting family has residual 0 under either normalization.

struct C1IntervalResult {
  double lo = 0.0;
  double hi = 0.0;
  double constant_deriv_residual = 0.0;
  double affine_combination_residual = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  bool flagged = false;
};

struct C1ProbeReport {
  std::string activation;
  double tol = 0.0;
  std::size_t grid_points = 0;
  std::vector<C1IntervalResult> intervals;
  /// True iff no interval is flagged.
  bool verdict = true;
};

/// Throws ConfigError when lo >= hi for any interval or grid_points < 8.
C1ProbeReport c1_probe(const ActivationFunction& a,
                       std::span<const std::pair<double, double>> intervals,
                       std::size_t grid_points, double tol);

/// Same probe applied to h' in place of h (uses h' and h'').
C1ProbeReport c1_probe_derivative(const ActivationFunction& a,
                                  std::span<const std::pair<double, double>> intervals,
                                  std::size_t grid_points, double tol);

}  // namespace twolayer
