#include "json_io.hpp"

#include "twolayer/errors.hpp"

namespace twolayer::detail {

json to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw FormatError("expected a non-empty array of rows", 0);
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw FormatError("ragged matrix in JSON", 0);
    }
    for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return M;
}

Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw FormatError("expected an array", 0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

json params_to_json(const NetworkParams& p) {
  return json{{"n", p.hidden()}, {"d", p.input_dim()}, {"W", to_json(p.W)},
              {"theta", to_json(p.theta)}};
}

NetworkParams params_from_json(const json& j) {
  NetworkParams p{matrix_from_json(j.at("W")), vector_from_json(j.at("theta"))};
  p.validate();
  return p;
}

}  // namespace twolayer::detail
