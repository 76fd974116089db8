#include "twolayer/network_params.hpp"

#include <string>

#include "twolayer/errors.hpp"

namespace twolayer {

void NetworkParams::validate() const {
  const auto n = W.rows();
  const auto d = W.cols();
  if (n < 1 || d < 1) throw ShapeError("NetworkParams: W must be non-empty");
  if (n > d) {
    throw ShapeError("NetworkParams: hidden width n=" + std::to_string(n) +
                     " exceeds input dimension d=" + std::to_string(d));
  }
  if (theta.size() != n) {
    throw ShapeError("NetworkParams: theta has length " + std::to_string(theta.size()) +
                     ", expected " + std::to_string(n));
  }
  if (!W.allFinite() || !theta.allFinite()) {
    throw NumericsError("NetworkParams: non-finite entries");
  }
}

Eigen::VectorXd vect_rows(const Eigen::MatrixXd& M) {
  Eigen::VectorXd out(M.size());
  const auto cols = M.cols();
  for (Eigen::Index j = 0; j < M.rows(); ++j) {
    for (Eigen::Index k = 0; k < cols; ++k) out[j * cols + k] = M(j, k);
  }
  return out;
}

}  // namespace twolayer
