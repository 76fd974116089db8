#include <cmath>

#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "frozen_values.hpp"
#include "test_support.hpp"
#include "twolayer/errors.hpp"
#include "twolayer/model.hpp"

using namespace twolayer;
namespace ts = testing_support;

namespace {

struct Fixed {
  NetworkParams p;
  Dataset ds;
};

Fixed oracle_instance() {
  Eigen::MatrixXd W(2, 3), U(5, 3);
  Eigen::VectorXd th(2), v(5);
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 3; ++k) W(j, k) = oracle::kW[j][k];
  for (int i = 0; i < 5; ++i)
    for (int k = 0; k < 3; ++k) U(i, k) = oracle::kU[i][k];
  for (int j = 0; j < 2; ++j) th[j] = oracle::kTheta[j];
  for (int i = 0; i < 5; ++i) v[i] = oracle::kV[i];
  return {NetworkParams{W, th}, Dataset(U, v)};
}

}  // namespace

TEST(Model, MatchesHighPrecisionOracle) {
  const auto inst = oracle_instance();
  for (const auto& ref : oracle::kModel) {
    const auto& a = builtin_activation(ref.act);
    EXPECT_NEAR(loss(inst.p, a, inst.ds), ref.loss, 1e-15) << ref.act;
    const auto gt = grad_theta(inst.p, a, inst.ds);
    const auto gW = grad_W(inst.p, a, inst.ds);
    const auto sys = stationarity_system(inst.p, a, inst.ds);
    for (int j = 0; j < 2; ++j) {
      EXPECT_NEAR(gt[j], ref.grad_theta[j], 1e-15) << ref.act;
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(gW(j, k), ref.grad_W[j][k], 1e-15) << ref.act;
    }
    ASSERT_EQ(sys.D.rows(), 6);
    ASSERT_EQ(sys.D.cols(), 5);
    for (int r = 0; r < 6; ++r)
      for (int i = 0; i < 5; ++i) EXPECT_NEAR(sys.D(r, i), ref.D[r][i], 1e-15) << ref.act;
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(sys.s[i], ref.s[i], 1e-15) << ref.act;
  }
}

TEST(Model, ForwardExamples) {
  const auto& sig = builtin_activation("sigmoid");
  NetworkParams zero_theta{Eigen::MatrixXd::Random(3, 4), Eigen::VectorXd::Zero(3)};
  EXPECT_EQ(forward(zero_theta, sig, Eigen::VectorXd::Random(4)), 0.0);
  NetworkParams zero_W{Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Ones(3)};
  EXPECT_DOUBLE_EQ(forward(zero_W, sig, Eigen::VectorXd::Random(4)), 1.5);
  EXPECT_THROW(forward(zero_W, sig, Eigen::VectorXd::Random(3)), ShapeError);

  ts::Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto W = ts::gaussian(3, 4, 1.0, rng);
    const Eigen::VectorXd th = ts::gaussian(3, 1, 1.0, rng).col(0);
    const Eigen::VectorXd u = ts::gaussian(4, 1, 1.0, rng).col(0);
    double ref = 0.0;
    for (int j = 0; j < 3; ++j) {
      double z = 0.0;
      for (int k = 0; k < 4; ++k) z += W(j, k) * u[k];
      ref += th[j] * sig.eval(z);
    }
    EXPECT_NEAR(forward(NetworkParams{W, th}, sig, u), ref, 1e-14);
  }
}

TEST(Model, LossExamples) {
  const auto& sig = builtin_activation("sigmoid");
  Eigen::MatrixXd U(2, 2);
  U << 0.3, -0.2, 0.7, 0.1;
  NetworkParams p{Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)};
  EXPECT_DOUBLE_EQ(loss(p, sig, Dataset(U, Eigen::VectorXd::Ones(2))), 0.5);

  ts::Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto ds = ts::random_dataset(3, 7, rng);
    NetworkParams q{ts::gaussian(2, 3, 1.0, rng), ts::gaussian(2, 1, 1.0, rng).col(0)};
    const double f = loss(q, sig, ds);
    EXPECT_GE(f, 0.0);
    EXPECT_NEAR(f, ts::naive_loss(q.W, q.theta, sig, ds.inputs(), ds.labels()), 1e-14);
    Eigen::VectorXd fitted(7);
    for (int i = 0; i < 7; ++i) fitted[i] = forward(q, sig, ds.input(i));
    const Dataset exact(ds.inputs(), fitted);
    EXPECT_EQ(loss(q, sig, exact), 0.0);
    EXPECT_EQ(residuals(q, sig, exact).norm(), 0.0);
    EXPECT_EQ(grad_W(q, sig, exact).norm(), 0.0);
    EXPECT_EQ(grad_theta(q, sig, exact).norm(), 0.0);
  }
}

TEST(Model, LossZeroIffResidualZero) {
  const auto& a = builtin_activation("tanh");
  ts::Rng rng(3);
  const auto ds = ts::random_dataset(3, 5, rng);
  NetworkParams p{ts::gaussian(3, 3, 1.0, rng), ts::gaussian(3, 1, 1.0, rng).col(0)};
  EXPECT_GT(loss(p, a, ds), 0.0);
  EXPECT_GT(residuals(p, a, ds).norm(), 0.0);
}

TEST(Model, GradThetaClosedFormAtZeroW) {
  const auto& sig = builtin_activation("sigmoid");
  ts::Rng rng(4);
  const auto ds = ts::random_dataset(3, 6, rng);
  const Eigen::VectorXd th = ts::gaussian(3, 1, 1.0, rng).col(0);
  NetworkParams p{Eigen::MatrixXd::Zero(3, 3), th};
  const Eigen::VectorXd h0 = Eigen::VectorXd::Constant(3, 0.5);
  // f = 1/(2N) sum (v - h0.th)^2, grad = -(1/N) sum (v - h0.th) h0.
  const double N = 6.0;
  Eigen::VectorXd expect = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < 6; ++i) expect -= (ds.label(i) - h0.dot(th)) * h0 / N;
  EXPECT_LE((grad_theta(p, sig, ds) - expect).norm(), 1e-15);
}

TEST(Model, GradientsMatchFiniteDifferences) {
  ts::Rng rng(5);
  for (const char* name : {"sigmoid", "tanh", "gaussian", "softplus"}) {
    const auto& a = builtin_activation(name);
    for (int t = 0; t < 20; ++t) {
      const auto d = ts::uniform_int(1, 5, rng);
      const auto n = ts::uniform_int(1, d, rng);
      const auto N = ts::uniform_int(1, 25, rng);
      const auto ds = ts::random_dataset(d, N, rng);
      NetworkParams p{ts::gaussian(n, d, 1.0, rng), ts::gaussian(n, 1, 1.0, rng).col(0)};
      const auto gW = grad_W(p, a, ds);
      const auto fW = ts::fd_grad_W(p.W, p.theta, a, ds.inputs(), ds.labels());
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = 0; k < d; ++k) EXPECT_LE(ts::rel_err(gW(j, k), fW(j, k)), 1e-6);
      const auto gt = grad_theta(p, a, ds);
      const auto ft = ts::fd_grad_theta(p.W, p.theta, a, ds.inputs(), ds.labels());
      for (Eigen::Index j = 0; j < n; ++j) EXPECT_LE(ts::rel_err(gt[j], ft[j]), 1e-6);
    }
  }
}

TEST(Model, StationarityExamples) {
  const auto& sig = builtin_activation("sigmoid");
  ts::Rng rng(6);
  const auto ds = ts::random_dataset(3, 4, rng);
  NetworkParams zero_theta{ts::gaussian(3, 3, 1.0, rng), Eigen::VectorXd::Zero(3)};
  EXPECT_EQ(stationarity_system(zero_theta, sig, ds).D.norm(), 0.0);
  EXPECT_EQ(grad_W(zero_theta, sig, ds).norm(), 0.0);

  Eigen::MatrixXd U(1, 1);
  U << 1.0;
  Eigen::VectorXd th(1);
  th << 2.0;
  const auto sys =
      stationarity_system(NetworkParams{Eigen::MatrixXd::Zero(1, 1), th}, sig,
                          Dataset(U, Eigen::VectorXd::Zero(1)));
  ASSERT_EQ(sys.D.rows(), 1);
  EXPECT_DOUBLE_EQ(sys.D(0, 0), 0.5);
  EXPECT_EQ(sys.hidden_unit_of_row(0), 0);
}

TEST(Model, StationarityIdentity) {
  ts::Rng rng(7);
  const auto& a = builtin_activation("sigmoid");
  for (int t = 0; t < 100; ++t) {
    const auto d = ts::uniform_int(1, 5, rng);
    const auto n = ts::uniform_int(1, d, rng);
    const auto N = ts::uniform_int(1, 25, rng);
    const auto ds = ts::random_dataset(d, N, rng);
    NetworkParams p{ts::gaussian(n, d, 1.0, rng), ts::gaussian(n, 1, 1.0, rng).col(0)};
    const auto sys = stationarity_system(p, a, ds);
    const Eigen::VectorXd lhs = vect_rows(grad_W(p, a, ds));
    const Eigen::VectorXd rhs = -sys.D * sys.s / static_cast<double>(N);
    EXPECT_LE((lhs - rhs).norm(), 1e-10 * std::max(lhs.norm(), 1e-300));
    for (Eigen::Index r = 0; r < sys.D.rows(); ++r) {
      const auto j = sys.hidden_unit_of_row(r), k = sys.coordinate_of_row(r);
      for (Eigen::Index i = 0; i < N; ++i)
        EXPECT_EQ(sys.D(r, i), a.deriv(p.W.row(j).dot(ds.input(i))) * p.theta[j] * ds.inputs()(i, k));
    }
  }
}

TEST(Model, ResidualBoundFromSigmaMinD) {
  ts::Rng rng(8);
  const auto& a = builtin_activation("sigmoid");
  for (int t = 0; t < 50; ++t) {
    const auto ds = ts::random_dataset(3, 9, rng);
    NetworkParams p{ts::gaussian(3, 3, 1.0, rng), ts::gaussian(3, 1, 1.0, rng).col(0)};
    const auto sys = stationarity_system(p, a, ds);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.D);
    const double smin = svd.singularValues()[8];
    if (smin <= 0) continue;
    EXPECT_LE(sys.s.norm(), 9.0 * grad_W(p, a, ds).norm() / smin * (1 + 1e-10));
  }
}

TEST(Model, ShapeErrors) {
  const auto& a = builtin_activation("sigmoid");
  ts::Rng rng(9);
  const auto ds = ts::random_dataset(3, 4, rng);
  NetworkParams wrong_d{Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2)};
  EXPECT_THROW(loss(wrong_d, a, ds), ShapeError);
  EXPECT_THROW(grad_W(wrong_d, a, ds), ShapeError);
  EXPECT_THROW(grad_theta(wrong_d, a, ds), ShapeError);
  EXPECT_THROW(stationarity_system(wrong_d, a, ds), ShapeError);
  NetworkParams wide{Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Zero(4)};
  EXPECT_THROW(loss(wide, a, ds), ShapeError);
  NetworkParams bad_theta{Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(3)};
  EXPECT_THROW(loss(bad_theta, a, ds), ShapeError);
}

TEST(Model, ParamsRoundTrip) {
  ts::TempDir dir;
  ts::Rng rng(10);
  NetworkParams p{ts::gaussian(2, 3, 1.0, rng), ts::gaussian(2, 1, 1.0, rng).col(0)};
  save_params(p, "tanh", dir / "params.csv");
  const auto back = load_params(dir / "params.csv");
  EXPECT_EQ(back.params.W, p.W);
  EXPECT_EQ(back.params.theta, p.theta);
  EXPECT_EQ(back.activation, "tanh");
}
