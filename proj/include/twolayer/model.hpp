#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "twolayer/activations.hpp"
#include "twolayer/dataset.hpp"
#include "twolayer/network_params.hpp"

namespace twolayer {

// Two-layer network phi(u) = theta^T h(W u) and the squared loss
//   f(W, theta) = 1/(2N) sum_i (v^i - phi(u^i))^2.
// Gradients are the true gradients of f, so descent is W <- W - gamma grad_W.

/// Hidden-layer quantities for every sample: rows are samples, columns hidden units.
struct HiddenLayer {
  Eigen::MatrixXd pre;   // z_ij = W[j,:] u^i
  Eigen::MatrixXd act;   // h(z_ij)
  Eigen::MatrixXd dact;  // h'(z_ij)
};

/// ShapeError when p and ds disagree on d (also runs p.validate()).
void check_shapes(const NetworkParams& p, const Dataset& ds);

HiddenLayer hidden_layer(const Eigen::MatrixXd& W, const ActivationFunction& a,
                         const Eigen::MatrixXd& inputs);

double forward(const NetworkParams& p, const ActivationFunction& a, const Eigen::VectorXd& u);

/// s_i = v^i - phi(u^i).
Eigen::VectorXd residuals(const NetworkParams& p, const ActivationFunction& a, const Dataset& ds);

double loss(const NetworkParams& p, const ActivationFunction& a, const Dataset& ds);

/// -(1/N) sum_i s_i h(W u^i)
Eigen::VectorXd grad_theta(const NetworkParams& p, const ActivationFunction& a,
                           const Dataset& ds);

/// [j,k] = -(1/N) sum_i s_i h'(W[j,:] u^i) theta[j] u^i[k]
Eigen::MatrixXd grad_W(const NetworkParams& p, const ActivationFunction& a, const Dataset& ds);

/// D is (n d) x N with D[j*d + k, i] = h'(W[j,:] u^i) theta[j] u^i[k], and
/// vect_rows(grad_W) == -(1/N) D s.
struct StationaritySystem {
  Eigen::MatrixXd D;
  Eigen::VectorXd s;
  Eigen::Index hidden = 0;
  Eigen::Index input_dim = 0;

  /// Row r of D belongs to hidden unit r / d and input coordinate r % d.
  Eigen::Index hidden_unit_of_row(Eigen::Index r) const { return r / input_dim; }
  Eigen::Index coordinate_of_row(Eigen::Index r) const { return r % input_dim; }
  std::string row_block_map() const;
};

StationaritySystem stationarity_system(const NetworkParams& p, const ActivationFunction& a,
                                       const Dataset& ds);

/// CSV with the n rows of W followed by theta as the final row, plus a
/// sidecar {n, d, activation}.
void save_params(const NetworkParams& p, std::string_view activation,
                 const std::filesystem::path& path);

struct LoadedParams {
  NetworkParams params;
  std::string activation;
};

LoadedParams load_params(const std::filesystem::path& path);

}  // namespace twolayer
