#pragma once

// Internal JSON conversions for Eigen types and params.

#include <json.hpp>

#include <Eigen/Core>

#include "twolayer/network_params.hpp"

namespace twolayer::detail {

using nlohmann::json;

json to_json(const Eigen::MatrixXd& M);
json to_json(const Eigen::VectorXd& v);
Eigen::MatrixXd matrix_from_json(const json& j);
Eigen::VectorXd vector_from_json(const json& j);

json params_to_json(const NetworkParams& p);
NetworkParams params_from_json(const json& j);

}  // namespace twolayer::detail
