#include "twolayer/activations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "twolayer/errors.hpp"

namespace twolayer {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
// s(x) s(-x) avoids the cancellation in 1 - s(x) for large x.
double sigmoid_d(double x) { return sigmoid(x) * sigmoid(-x); }
double sigmoid_dd(double x) {
  const double s = sigmoid(x), r = sigmoid(-x);
  return s * r * (r - s);
}

// sech^2 without the cancellation in 1 - tanh^2.
double sech2(double x) {
  const double c = std::cosh(x);
  return 1.0 / (c * c);
}

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

// (1 - e^-x) / (1 + e^-x) == tanh(x / 2)
double sigsym(double x) { return std::tanh(0.5 * x); }
double sigsym_d(double x) { return 0.5 * sech2(0.5 * x); }
double sigsym_dd(double x) { return -0.5 * std::tanh(0.5 * x) * sech2(0.5 * x); }

double gauss(double x) { return std::exp(-x * x); }
double gauss_d(double x) { return -2.0 * x * std::exp(-x * x); }
double gauss_dd(double x) { return (4.0 * x * x - 2.0) * std::exp(-x * x); }

double gausssym(double x) { return 2.0 * std::exp(-x * x) - 1.0; }
double gausssym_d(double x) { return -4.0 * x * std::exp(-x * x); }
double gausssym_dd(double x) { return (8.0 * x * x - 4.0) * std::exp(-x * x); }

double elliot(double x) { return x / (2.0 * (1.0 + std::abs(x))) + 0.5; }
double elliot_d(double x) {
  const double a = 1.0 + std::abs(x);
  return 1.0 / (2.0 * a * a);
}
double elliot_dd(double x) {
  const double a = 1.0 + std::abs(x);
  return -sign(x) / (a * a * a);
}

double elliotsym(double x) { return x / (1.0 + std::abs(x)); }
double elliotsym_d(double x) {
  const double a = 1.0 + std::abs(x);
  return 1.0 / (a * a);
}
double elliotsym_dd(double x) {
  const double a = 1.0 + std::abs(x);
  return -2.0 * sign(x) / (a * a * a);
}

// (2/sqrt(pi)) * int_0^x exp(-t^2/2) dt == sqrt(2) * erf(x / sqrt(2))
double erf_scaled(double x) { return std::numbers::sqrt2 * std::erf(x / std::numbers::sqrt2); }
double erf_scaled_d(double x) { return std::numbers::inv_sqrtpi * 2.0 * std::exp(-0.5 * x * x); }
double erf_scaled_dd(double x) { return -std::numbers::inv_sqrtpi * 2.0 * x * std::exp(-0.5 * x * x); }

double tanh_h(double x) { return std::tanh(x); }
double tanh_d(double x) { return sech2(x); }
double tanh_dd(double x) { return -2.0 * std::tanh(x) * sech2(x); }

double linear(double x) { return x; }
double one(double) { return 1.0; }
double zero(double) { return 0.0; }

double relu(double x) { return x > 0.0 ? x : 0.0; }
double relu_d(double x) { return x > 0.0 ? 1.0 : 0.0; }

// Lipschitz constants: dense maximization over [-50, 50] plus 5% margin.
std::vector<ActivationFunction> make_builtins() {
  using Def = ActivationFunction::Definition;
  std::vector<ActivationFunction> out;
  out.emplace_back(Def{"softplus", softplus, sigmoid, sigmoid_d, std::nullopt, 0.2625, kInf, true});
  out.emplace_back(Def{"sigmoid", sigmoid, sigmoid_d, sigmoid_dd, 1.0, 0.101037, 0.101037, true});
  out.emplace_back(
      Def{"sigmoid_symmetric", sigsym, sigsym_d, sigsym_dd, 1.0, 0.202073, 0.2625, true});
  out.emplace_back(Def{"gaussian", gauss, gauss_d, gauss_dd, 1.0, 2.1, 2.1, true});
  out.emplace_back(
      Def{"gaussian_symmetric", gausssym, gausssym_d, gausssym_dd, 1.0, 4.2, 4.2, true});
  out.emplace_back(Def{"elliot", elliot, elliot_d, elliot_dd, 1.0, 1.05, 1.05, true});
  out.emplace_back(
      Def{"elliot_symmetric", elliotsym, elliotsym_d, elliotsym_dd, 1.0, 2.1, 2.1, true});
  out.emplace_back(Def{"erf", erf_scaled, erf_scaled_d, erf_scaled_dd, std::numbers::sqrt2,
                       0.718616, 1.336902, true});
  out.emplace_back(Def{"tanh", tanh_h, tanh_d, tanh_dd, 1.0, 0.808291, 1.05, true});
  out.emplace_back(Def{"linear", linear, one, zero, std::nullopt, 0.0, 1.0, false});
  out.emplace_back(Def{"relu", relu, relu_d, zero, std::nullopt, kInf, 1.0, false});
  return out;
}

const std::vector<ActivationFunction>& builtins() {
  static const std::vector<ActivationFunction> table = make_builtins();
  return table;
}

template <typename F>
Eigen::VectorXd apply_checked(const Eigen::VectorXd& z, F&& f) {
  Eigen::VectorXd out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i])) {
      throw NumericsError("vector_apply: non-finite component at index " + std::to_string(i));
    }
    out[i] = f(z[i]);
  }
  return out;
}

template <typename H, typename DH>
C1ProbeReport probe_impl(const std::string& name, H h, DH dh,
                         std::span<const std::pair<double, double>> intervals,
                         std::size_t grid_points, double tol) {
  if (grid_points < 8) throw ConfigError("c1_probe: grid_points must be >= 8");
  for (const auto& [lo, hi] : intervals) {
    if (!(lo < hi)) throw ConfigError("c1_probe: interval requires lo < hi");
  }

  C1ProbeReport report;
  report.activation = name;
  report.tol = tol;
  report.grid_points = grid_points;

  const auto m = static_cast<Eigen::Index>(grid_points);
  Eigen::VectorXd g(m), y(m);
  for (const auto& [lo, hi] : intervals) {
    const double step = (hi - lo) / static_cast<double>(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double x = lo + (static_cast<double>(i) + 0.5) * step;
      g[i] = dh(x);
      y[i] = x * g[i] + h(x);
      if (!std::isfinite(g[i]) || !std::isfinite(y[i])) {
        throw NumericsError("c1_probe: non-finite evaluation in " + name);
      }
    }

    C1IntervalResult r;
    r.lo = lo;
    r.hi = hi;

    const double g_mean = g.mean();
    const double g_scale = g.cwiseAbs().maxCoeff();
    r.c1 = g_mean;
    r.constant_deriv_residual =
        g_scale > 0.0 ? (g.array() - g_mean).abs().maxCoeff() / g_scale : 0.0;

    // Centered simple regression of y on g: y - ybar = slope (g - gbar).
    const double y_mean = y.mean();
    const Eigen::VectorXd gc = g.array() - g_mean;
    const Eigen::VectorXd yc = y.array() - y_mean;
    const double var = gc.squaredNorm();
    const double slope = var > 0.0 ? gc.dot(yc) / var : 0.0;
    const double spread = yc.cwiseAbs().maxCoeff();
    const double resid = (yc - slope * gc).cwiseAbs().maxCoeff();
    r.c2 = -slope;
    r.c3 = y_mean - slope * g_mean;
    r.affine_combination_residual = spread > 0.0 ? resid / spread : 0.0;

    r.flagged = r.constant_deriv_residual <= tol || r.affine_combination_residual <= tol;
    report.verdict = report.verdict && !r.flagged;
    report.intervals.push_back(r);
  }
  return report;
}

}  // namespace

ActivationFunction::ActivationFunction(Definition def) : def_(std::move(def)) {
  if (def_.eval == nullptr || def_.deriv == nullptr || def_.deriv2 == nullptr) {
    throw ConfigError("ActivationFunction '" + def_.name + "' is missing a scalar map");
  }
  if (def_.deriv_lipschitz < 0.0 || def_.grad_H_bound < 0.0 ||
      (def_.value_bound && *def_.value_bound < 0.0)) {
    throw ConfigError("ActivationFunction '" + def_.name + "' has a negative bound");
  }
}

const std::vector<std::string>& builtin_activation_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& a : builtins()) v.push_back(a.name());
    return v;
  }();
  return names;
}

const ActivationFunction& builtin_activation(std::string_view name) {
  for (const auto& a : builtins()) {
    if (a.name() == name) return a;
  }
  throw NameError("unknown activation '" + std::string(name) + "'");
}

Eigen::VectorXd vector_apply(const ActivationFunction& a, const Eigen::VectorXd& z) {
  return apply_checked(z, [&a](double x) { return a.eval(x); });
}

Eigen::VectorXd vector_apply_deriv(const ActivationFunction& a, const Eigen::VectorXd& z) {
  return apply_checked(z, [&a](double x) { return a.deriv(x); });
}

C1ProbeReport c1_probe(const ActivationFunction& a,
                       std::span<const std::pair<double, double>> intervals,
                       std::size_t grid_points, double tol) {
  return probe_impl(
      a.name(), [&a](double x) { return a.eval(x); }, [&a](double x) { return a.deriv(x); },
      intervals, grid_points, tol);
}

C1ProbeReport c1_probe_derivative(const ActivationFunction& a,
                                  std::span<const std::pair<double, double>> intervals,
                                  std::size_t grid_points, double tol) {
  return probe_impl(
      a.name() + "'", [&a](double x) { return a.deriv(x); },
      [&a](double x) { return a.deriv2(x); }, intervals, grid_points, tol);
}

}  // namespace twolayer
