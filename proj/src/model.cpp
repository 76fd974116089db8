#include "twolayer/model.hpp"

#include <sstream>

#include "csv_io.hpp"
#include "json_io.hpp"
#include "twolayer/errors.hpp"

namespace twolayer {

void check_shapes(const NetworkParams& p, const Dataset& ds) {
  p.validate();
  if (p.input_dim() != ds.dim()) {
    throw ShapeError("W has " + std::to_string(p.input_dim()) + " columns but data has d=" +
                     std::to_string(ds.dim()));
  }
}

HiddenLayer hidden_layer(const Eigen::MatrixXd& W, const ActivationFunction& a,
                         const Eigen::MatrixXd& inputs) {
  if (W.cols() != inputs.cols()) throw ShapeError("hidden_layer: W and inputs disagree on d");
  HiddenLayer out;
  out.pre = inputs * W.transpose();
  if (!out.pre.allFinite()) throw NumericsError("hidden_layer: non-finite pre-activations");
  out.act = out.pre.unaryExpr([&a](double z) { return a.eval(z); });
  out.dact = out.pre.unaryExpr([&a](double z) { return a.deriv(z); });
  return out;
}

double forward(const NetworkParams& p, const ActivationFunction& a, const Eigen::VectorXd& u) {
  p.validate();
  if (u.size() != p.input_dim()) {
    throw ShapeError("forward: input has length " + std::to_string(u.size()) + ", expected " +
                     std::to_string(p.input_dim()));
  }
  const Eigen::VectorXd z = p.W * u;
  return p.theta.dot(vector_apply(a, z));
}

Eigen::VectorXd residuals(const NetworkParams& p, const ActivationFunction& a, const Dataset& ds) {
  check_shapes(p, ds);
  const auto hl = hidden_layer(p.W, a, ds.inputs());
  return ds.labels() - hl.act * p.theta;
}

double loss(const NetworkParams& p, const ActivationFunction& a, const Dataset& ds) {
  const auto s = residuals(p, a, ds);
  return s.squaredNorm() / (2.0 * static_cast<double>(ds.size()));
}

Eigen::VectorXd grad_theta(const NetworkParams& p, const ActivationFunction& a,
                           const Dataset& ds) {
  check_shapes(p, ds);
  const auto hl = hidden_layer(p.W, a, ds.inputs());
  const Eigen::VectorXd s = ds.labels() - hl.act * p.theta;
  return -(hl.act.transpose() * s) / static_cast<double>(ds.size());
}

Eigen::MatrixXd grad_W(const NetworkParams& p, const ActivationFunction& a, const Dataset& ds) {
  check_shapes(p, ds);
  const auto hl = hidden_layer(p.W, a, ds.inputs());
  const Eigen::VectorXd s = ds.labels() - hl.act * p.theta;
  // A_ij = s_i h'(z_ij) theta_j ; grad = -(1/N) A^T U
  const Eigen::MatrixXd A = (hl.dact.array().colwise() * s.array()).rowwise() *
                            p.theta.transpose().array();
  return -(A.transpose() * ds.inputs()) / static_cast<double>(ds.size());
}

std::string StationaritySystem::row_block_map() const {
  std::ostringstream ss;
  ss << "D rows [j*" << input_dim << ", (j+1)*" << input_dim << ") <- hidden row j, j = 0.."
     << (hidden - 1) << "; row j*" << input_dim << "+k <- input coordinate k";
  return ss.str();
}

StationaritySystem stationarity_system(const NetworkParams& p, const ActivationFunction& a,
                                       const Dataset& ds) {
  check_shapes(p, ds);
  const auto hl = hidden_layer(p.W, a, ds.inputs());
  const auto n = p.hidden();
  const auto d = p.input_dim();
  const auto N = ds.size();

  StationaritySystem sys;
  sys.hidden = n;
  sys.input_dim = d;
  sys.s = ds.labels() - hl.act * p.theta;
  sys.D.resize(n * d, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double scale = hl.dact(i, j) * p.theta[j];
      for (Eigen::Index k = 0; k < d; ++k) sys.D(j * d + k, i) = scale * ds.inputs()(i, k);
    }
  }
  return sys;
}

void save_params(const NetworkParams& p, std::string_view activation,
                 const std::filesystem::path& path) {
  p.validate();
  std::ostringstream csv;
  for (Eigen::Index j = 0; j < p.hidden(); ++j) {
    for (Eigen::Index k = 0; k < p.input_dim(); ++k) {
      if (k > 0) csv << ',';
      csv << detail::format_double(p.W(j, k));
    }
    csv << '\n';
  }
  for (Eigen::Index j = 0; j < p.hidden(); ++j) {
    if (j > 0) csv << ',';
    csv << detail::format_double(p.theta[j]);
  }
  csv << '\n';
  detail::write_text_file(path, csv.str());

  detail::json meta{{"n", p.hidden()}, {"d", p.input_dim()}, {"activation", std::string(activation)}};
  detail::write_text_file(sidecar_path(path), meta.dump(2) + "\n");
}

LoadedParams load_params(const std::filesystem::path& path) {
  const auto rows = detail::read_numeric_csv(path);
  if (rows.size() < 2) throw FormatError(path.string() + ": need W rows and a theta row", 0);

  const auto meta_path = sidecar_path(path);
  Eigen::Index n = static_cast<Eigen::Index>(rows.size()) - 1;
  Eigen::Index d = static_cast<Eigen::Index>(rows.front().values.size());
  std::string activation = "sigmoid";
  if (std::filesystem::exists(meta_path)) {
    try {
      const auto meta = detail::json::parse(detail::read_text_file(meta_path));
      n = meta.at("n").get<Eigen::Index>();
      d = meta.at("d").get<Eigen::Index>();
      activation = meta.at("activation").get<std::string>();
    } catch (const detail::json::exception& e) {
      throw FormatError(meta_path.string() + ": " + e.what(), 0);
    }
  }
  if (static_cast<Eigen::Index>(rows.size()) != n + 1) {
    throw FormatError(path.string() + ": expected " + std::to_string(n + 1) + " rows", 0);
  }

  LoadedParams out;
  out.activation = activation;
  out.params.W.resize(n, d);
  out.params.theta.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& row = rows[static_cast<std::size_t>(j)];
    if (static_cast<Eigen::Index>(row.values.size()) != d) {
      throw FormatError(path.string() + ": expected " + std::to_string(d) + " columns", row.line);
    }
    for (Eigen::Index k = 0; k < d; ++k) out.params.W(j, k) = row.values[static_cast<std::size_t>(k)];
  }
  const auto& last = rows.back();
  if (static_cast<Eigen::Index>(last.values.size()) != n) {
    throw FormatError(path.string() + ": theta row must have " + std::to_string(n) + " entries",
                      last.line);
  }
  for (Eigen::Index j = 0; j < n; ++j) out.params.theta[j] = last.values[static_cast<std::size_t>(j)];
  try {
    out.params.validate();
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
  return out;
}

}  // namespace twolayer
