#pragma once

#include <Eigen/Core>

namespace twolayer {

/// Hidden layer W (n x d) and output layer theta (length n), 1 <= n <= d.
struct NetworkParams {
  Eigen::MatrixXd W;
  Eigen::VectorXd theta;

  Eigen::Index hidden() const noexcept { return W.rows(); }
  Eigen::Index input_dim() const noexcept { return W.cols(); }

  /// ShapeError on inconsistent or out-of-range dimensions, NumericsError on
  /// non-finite entries.
  void validate() const;
};

/// Row-stacking vectorization: out[j * cols + k] = M(j, k).
Eigen::VectorXd vect_rows(const Eigen::MatrixXd& M);

}  // namespace twolayer
