#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "frozen_values.hpp"
#include "twolayer/activations.hpp"
#include "twolayer/errors.hpp"

using namespace twolayer;

namespace {

const std::vector<std::string> kClaimedC1 = {"softplus", "sigmoid", "sigmoid_symmetric",
                                         "gaussian", "gaussian_symmetric", "elliot",
                                         "elliot_symmetric", "erf", "tanh"};

std::vector<double> sample_points(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<double> xs(count);
  for (auto& x : xs) x = u(rng);
  return xs;
}

std::vector<std::pair<double, double>> random_intervals(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<double, double>> out;
  while (out.size() < count) {
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    double lo = u(rng), hi = u(rng);
    if (lo > hi) std::swap(lo, hi);
    if (hi - lo >= 0.1) out.emplace_back(lo, hi);
  }
  return out;
}

}  // namespace

TEST(Activations, NamesAndClaims) {
  const auto& names = builtin_activation_names();
  ASSERT_EQ(names.size(), 11u);
  for (const auto& n : kClaimedC1) EXPECT_TRUE(builtin_activation(n).claimed_c1()) << n;
  EXPECT_FALSE(builtin_activation("linear").claimed_c1());
  EXPECT_FALSE(builtin_activation("relu").claimed_c1());
  EXPECT_THROW(builtin_activation("swish"), NameError);
}

TEST(Activations, SpecExamples) {
  const auto& sig = builtin_activation("sigmoid");
  EXPECT_DOUBLE_EQ(sig.eval(0.0), 0.5);
  EXPECT_DOUBLE_EQ(sig.deriv(0.0), 0.25);
  const auto& th = builtin_activation("tanh");
  EXPECT_DOUBLE_EQ(th.eval(0.0), 0.0);
  ASSERT_TRUE(th.value_bound().has_value());
  EXPECT_DOUBLE_EQ(*th.value_bound(), 1.0);
  const auto& sp = builtin_activation("softplus");
  EXPECT_FALSE(sp.value_bound().has_value());
  EXPECT_NEAR(sp.eval(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(builtin_activation("erf").eval(50.0), std::numbers::sqrt2, 1e-15);
}

TEST(Activations, MatchesHighPrecisionValues) {
  for (const auto& ref : oracle::kActValues) {
    const auto& a = builtin_activation(ref.name);
    for (std::size_t p = 0; p < oracle::kPoints.size(); ++p) {
      const double x = oracle::kPoints[p];
      const double tol = 1e-13;
      EXPECT_NEAR(a.eval(x), ref.v[p][0], tol * std::max(1.0, std::abs(ref.v[p][0])))
          << ref.name << " h(" << x << ")";
      EXPECT_NEAR(a.deriv(x), ref.v[p][1], tol * std::max(1.0, std::abs(ref.v[p][1])))
          << ref.name << " h'(" << x << ")";
      EXPECT_NEAR(a.deriv2(x), ref.v[p][2], tol * std::max(1.0, std::abs(ref.v[p][2])))
          << ref.name << " h''(" << x << ")";
    }
  }
}

TEST(Activations, ConstantsCoverGridMaxima) {
  for (const auto& g : oracle::kGridMax) {
    const auto& a = builtin_activation(g.name);
    // Upper check: constants carry a 5% margin over the supremum, which for
    // the Elliot functions is a limit at infinity beyond the grid.
    EXPECT_GE(a.deriv_lipschitz(), g.L_hp) << g.name;
    EXPECT_LE(a.deriv_lipschitz(), 1.1 * g.L_hp) << g.name;
    if (g.L_hhp < 0) {
      EXPECT_TRUE(std::isinf(a.grad_H_bound())) << g.name;
    } else {
      EXPECT_GE(a.grad_H_bound(), g.L_hhp) << g.name;
      EXPECT_LE(a.grad_H_bound(), 1.1 * g.L_hhp) << g.name;
    }
  }
}

// Central difference of f at x compared with g(x). The quotient cannot
// resolve differences below its rounding floor eps * max|f| / step, which
// dominates in saturated tails where g is tiny next to f.
bool fd_agrees(double (ActivationFunction::*f)(double) const,
               double (ActivationFunction::*g)(double) const, const ActivationFunction& a,
               double x, double rel_tol) {
  const double h = 1e-5;
  const double fp = (a.*f)(x + h), fm = (a.*f)(x - h);
  const double fd = (fp - fm) / (2 * h);
  const double exact = (a.*g)(x);
  const double floor = 8.0 * std::numeric_limits<double>::epsilon() *
                       std::max(std::abs(fp), std::abs(fm)) / h;
  const double err = std::abs(fd - exact);
  return err <= rel_tol * std::max(std::abs(exact), 1e-8) || err <= floor;
}

TEST(Activations, FiniteDifferenceConsistency) {
  const auto xs = sample_points(1000, 1);
  std::size_t resolved = 0;
  for (const auto& name : builtin_activation_names()) {
    const auto& a = builtin_activation(name);
    for (double x : xs) {
      if (name == "relu" && std::abs(x) < 1e-3) continue;  // kink
      EXPECT_TRUE(fd_agrees(&ActivationFunction::eval, &ActivationFunction::deriv, a, x, 1e-6))
          << name << " h' at " << x;
      if ((name == "elliot" || name == "elliot_symmetric") && std::abs(x) < 1e-3) continue;
      EXPECT_TRUE(fd_agrees(&ActivationFunction::deriv, &ActivationFunction::deriv2, a, x, 1e-5))
          << name << " h'' at " << x;
      resolved += std::abs(a.deriv(x)) > 1e-4;
    }
  }
  EXPECT_GT(resolved, 5000u);
}

TEST(Activations, BoundsHoldOnSamples) {
  const auto xs = sample_points(1000, 2);
  for (const auto& name : builtin_activation_names()) {
    const auto& a = builtin_activation(name);
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      if (a.value_bound()) {
        EXPECT_LE(std::abs(a.eval(xs[i])), *a.value_bound()) << name;
      }
      const double q = std::abs(a.deriv(xs[i]) - a.deriv(xs[i + 1])) / std::abs(xs[i] - xs[i + 1]);
      EXPECT_LE(q, a.deriv_lipschitz() * (1 + 1e-6)) << name;
    }
  }
}

TEST(Activations, GradHBoundOnSamples) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (const auto& name : builtin_activation_names()) {
    const auto& a = builtin_activation(name);
    for (int t = 0; t < 10000; ++t) {
      const double x1 = u(rng), x2 = u(rng);
      const double g1 = a.deriv(x1) * a.deriv(x2), g2 = a.eval(x1) * a.deriv2(x2);
      const double B = a.grad_H_bound();
      if (std::isinf(B)) continue;
      EXPECT_LE(g1 * g1 + g2 * g2, B * B * (1 + 1e-6)) << name;
    }
  }
}

TEST(Activations, VectorApply) {
  const auto& sig = builtin_activation("sigmoid");
  Eigen::VectorXd z(2);
  z << 0.0, 0.0;
  EXPECT_EQ(vector_apply(sig, z), Eigen::VectorXd::Constant(2, 0.5));
  EXPECT_EQ(vector_apply(sig, Eigen::VectorXd()).size(), 0);
  z << 0.0, 1.0;
  const auto g = vector_apply(builtin_activation("gaussian"), z);
  EXPECT_DOUBLE_EQ(g[0], 1.0);
  EXPECT_NEAR(g[1], std::exp(-1.0), 1e-16);
  z << 0.0, std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(vector_apply(sig, z), NumericsError);
  z << std::numeric_limits<double>::infinity(), 0.0;
  EXPECT_THROW(vector_apply_deriv(sig, z), NumericsError);
}

TEST(C1Probe, ControlsAreFlagged) {
  const std::vector<std::pair<double, double>> r12 = {{1.0, 2.0}};
  EXPECT_FALSE(c1_probe(builtin_activation("relu"), r12, 64, 1e-8).verdict);
  const std::vector<std::pair<double, double>> sym = {{-1.0, 1.0}};
  EXPECT_FALSE(c1_probe(builtin_activation("linear"), sym, 64, 1e-8).verdict);
}

TEST(C1Probe, SigmoidTwentyIntervals) {
  const auto iv = random_intervals(20, 4);
  const auto r = c1_probe(builtin_activation("sigmoid"), iv, 64, 1e-8);
  EXPECT_TRUE(r.verdict);
  for (const auto& i : r.intervals) EXPECT_FALSE(i.flagged);
}

TEST(C1Probe, MatchesLeastSquaresOracle) {
  for (const auto& c : oracle::kC1) {
    const std::vector<std::pair<double, double>> iv = {{c.lo, c.hi}};
    const auto r = c1_probe(builtin_activation(c.act), iv, 64, 1e-8);
    ASSERT_EQ(r.intervals.size(), 1u);
    EXPECT_NEAR(r.intervals[0].constant_deriv_residual, c.const_resid, 1e-9 + 1e-6 * c.const_resid)
        << c.act;
    EXPECT_NEAR(r.intervals[0].affine_combination_residual, c.affine_resid,
                1e-9 + 1e-6 * c.affine_resid)
        << c.act;
  }
}

TEST(C1Probe, ClaimedActivationsHundredIntervals) {
  const auto iv = random_intervals(100, 5);
  for (const auto& name : kClaimedC1) {
    const auto r = c1_probe(builtin_activation(name), iv, 64, 1e-8);
    // Elliot functions satisfy (1+|x|) h' + h = const on each half line,
    // an exact family-(ii) fit, so they are flagged on one-sided intervals.
    const bool elliot = name == "elliot" || name == "elliot_symmetric";
    EXPECT_EQ(r.verdict, !elliot) << name;
  }
  EXPECT_FALSE(c1_probe(builtin_activation("linear"), iv, 64, 1e-8).verdict);
  EXPECT_FALSE(c1_probe(builtin_activation("relu"), iv, 64, 1e-8).verdict);
}

TEST(C1Probe, ElliotFlaggedOnlyOffOrigin) {
  const std::vector<std::pair<double, double>> iv = {{0.5, 2.0}, {-3.0, -1.0}, {-1.0, 1.5}};
  const auto r = c1_probe(builtin_activation("elliot"), iv, 64, 1e-8);
  EXPECT_TRUE(r.intervals[0].flagged);
  EXPECT_TRUE(r.intervals[1].flagged);
  EXPECT_FALSE(r.intervals[2].flagged);
  EXPECT_NEAR(r.intervals[0].c2, 1.0, 1e-9);
  EXPECT_NEAR(r.intervals[1].c2, -1.0, 1e-9);
}

TEST(C1Probe, Preconditions) {
  const auto& a = builtin_activation("sigmoid");
  const std::vector<std::pair<double, double>> bad = {{1.0, 1.0}};
  EXPECT_THROW(c1_probe(a, bad, 64, 1e-8), ConfigError);
  const std::vector<std::pair<double, double>> ok = {{0.0, 1.0}};
  EXPECT_THROW(c1_probe(a, ok, 7, 1e-8), ConfigError);
  EXPECT_NO_THROW(c1_probe(a, ok, 8, 1e-8));
}

TEST(C1Probe, DerivativeProbeRuns) {
  const auto iv = random_intervals(20, 6);
  EXPECT_TRUE(c1_probe_derivative(builtin_activation("sigmoid"), iv, 64, 1e-8).verdict);
  EXPECT_FALSE(c1_probe_derivative(builtin_activation("linear"), iv, 64, 1e-8).verdict);
}
