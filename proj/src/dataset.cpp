#include "twolayer/dataset.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "csv_io.hpp"
#include "json_io.hpp"
#include "twolayer/errors.hpp"
#include "twolayer/model.hpp"

namespace twolayer {

using detail::json;

std::string to_string(InputDistribution dist) {
  switch (dist) {
    case InputDistribution::uniform_cube:
      return "uniform_cube";
    case InputDistribution::std_gaussian:
      return "std_gaussian";
  }
  return "unknown";
}

InputDistribution parse_distribution(std::string_view name) {
  if (name == "uniform_cube") return InputDistribution::uniform_cube;
  if (name == "std_gaussian") return InputDistribution::std_gaussian;
  throw NameError("unknown input distribution '" + std::string(name) + "'");
}

Dataset::Dataset(Eigen::MatrixXd inputs, Eigen::VectorXd labels, Provenance provenance)
    : inputs_(std::move(inputs)), labels_(std::move(labels)), provenance_(std::move(provenance)) {
  if (inputs_.rows() < 1 || inputs_.cols() < 1) {
    throw ShapeError("Dataset: need N >= 1 samples of dimension d >= 1");
  }
  if (labels_.size() != inputs_.rows()) {
    throw ShapeError("Dataset: " + std::to_string(inputs_.rows()) + " inputs but " +
                     std::to_string(labels_.size()) + " labels");
  }
  if (!inputs_.allFinite() || !labels_.allFinite()) {
    throw NumericsError("Dataset: non-finite entries");
  }
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.inputs_.rows() != b.inputs_.rows() || a.inputs_.cols() != b.inputs_.cols()) return false;
  if (a.inputs_ != b.inputs_ || a.labels_ != b.labels_) return false;
  const auto& pa = a.provenance_;
  const auto& pb = b.provenance_;
  if (pa.distribution != pb.distribution || pa.seed != pb.seed ||
      pa.label_noise_std != pb.label_noise_std || pa.label_noise_seed != pb.label_noise_seed ||
      pa.teacher.has_value() != pb.teacher.has_value()) {
    return false;
  }
  if (pa.teacher) {
    const auto& ta = *pa.teacher;
    const auto& tb = *pb.teacher;
    if (ta.activation != tb.activation || ta.params.W.rows() != tb.params.W.rows() ||
        ta.params.W.cols() != tb.params.W.cols() || ta.params.W != tb.params.W ||
        ta.params.theta != tb.params.theta) {
      return false;
    }
  }
  return true;
}

Eigen::MatrixXd generate_inputs(Eigen::Index d, Eigen::Index N, InputDistribution dist,
                                std::uint64_t seed) {
  if (d < 1 || N < 1) throw ConfigError("generate_inputs: need d >= 1 and N >= 1");
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd U(N, d);
  if (dist == InputDistribution::uniform_cube) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index k = 0; k < d; ++k) U(i, k) = unif(rng);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index k = 0; k < d; ++k) U(i, k) = normal(rng);
  }
  return U;
}

Dataset label_with_teacher(const Eigen::MatrixXd& inputs, const Teacher& teacher,
                           double noise_std, std::uint64_t noise_seed) {
  teacher.params.validate();
  if (teacher.params.input_dim() != inputs.cols()) {
    throw ShapeError("label_with_teacher: teacher expects d=" +
                     std::to_string(teacher.params.input_dim()) + ", inputs have d=" +
                     std::to_string(inputs.cols()));
  }
  if (noise_std < 0.0) throw ConfigError("label_with_teacher: noise_std must be >= 0");
  const auto& act = builtin_activation(teacher.activation);

  Eigen::VectorXd labels(inputs.rows());
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    labels[i] = forward(teacher.params, act, inputs.row(i).transpose());
  }
  if (noise_std > 0.0) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> normal(0.0, noise_std);
    for (Eigen::Index i = 0; i < labels.size(); ++i) labels[i] += normal(rng);
  }

  Provenance prov;
  prov.teacher = teacher;
  prov.label_noise_std = noise_std;
  prov.label_noise_seed = noise_seed;
  return Dataset(inputs, std::move(labels), std::move(prov));
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto out = csv_path;
  out.replace_extension(".meta.json");
  return out;
}

void save(const Dataset& ds, const std::filesystem::path& path) {
  std::ostringstream csv;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index k = 0; k < ds.dim(); ++k) csv << detail::format_double(ds.inputs()(i, k)) << ',';
    csv << detail::format_double(ds.label(i)) << '\n';
  }
  detail::write_text_file(path, csv.str());

  const auto& prov = ds.provenance();
  json meta{{"d", ds.dim()},
            {"N", ds.size()},
            {"distribution", prov.distribution},
            {"seed", prov.seed},
            {"label_noise_std", prov.label_noise_std},
            {"label_noise_seed", prov.label_noise_seed}};
  if (prov.teacher) {
    auto t = detail::params_to_json(prov.teacher->params);
    t["activation"] = prov.teacher->activation;
    meta["teacher"] = std::move(t);
  } else {
    meta["teacher"] = nullptr;
  }
  detail::write_text_file(sidecar_path(path), meta.dump(2) + "\n");
}

Dataset load(const std::filesystem::path& path) {
  const auto rows = detail::read_numeric_csv(path);
  if (rows.empty()) throw FormatError(path.string() + ": no data rows", 0);

  Provenance prov;
  std::optional<Eigen::Index> meta_d;
  std::optional<Eigen::Index> meta_n;
  const auto meta_path = sidecar_path(path);
  if (std::filesystem::exists(meta_path)) {
    try {
      const auto meta = json::parse(detail::read_text_file(meta_path));
      meta_d = meta.at("d").get<Eigen::Index>();
      meta_n = meta.at("N").get<Eigen::Index>();
      prov.distribution = meta.value("distribution", std::string("unknown"));
      prov.seed = meta.value("seed", std::uint64_t{0});
      prov.label_noise_std = meta.value("label_noise_std", 0.0);
      prov.label_noise_seed = meta.value("label_noise_seed", std::uint64_t{0});
      if (meta.contains("teacher") && !meta.at("teacher").is_null()) {
        const auto& t = meta.at("teacher");
        prov.teacher = Teacher{detail::params_from_json(t), t.at("activation").get<std::string>()};
      }
    } catch (const json::exception& e) {
      throw FormatError(meta_path.string() + ": " + e.what(), 0);
    } catch (const Error& e) {
      throw FormatError(meta_path.string() + ": " + e.what(), 0);
    }
  }

  const auto cols = meta_d ? *meta_d + 1 : static_cast<Eigen::Index>(rows.front().values.size());
  if (cols < 2) throw FormatError(path.string() + ": need at least one input and one label column", rows.front().line);
  if (meta_n && *meta_n != static_cast<Eigen::Index>(rows.size())) {
    throw FormatError(path.string() + ": sidecar declares N=" + std::to_string(*meta_n) +
                          " but file has " + std::to_string(rows.size()) + " rows",
                      0);
  }

  const auto N = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd inputs(N, cols - 1);
  Eigen::VectorXd labels(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.values.size()) != cols) {
      throw FormatError(path.string() + ": expected " + std::to_string(cols) + " columns, got " +
                            std::to_string(row.values.size()),
                        row.line);
    }
    for (Eigen::Index k = 0; k + 1 < cols; ++k) {
      const double v = row.values[static_cast<std::size_t>(k)];
      if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite value", row.line);
      inputs(i, k) = v;
    }
    labels[i] = row.values.back();
    if (!std::isfinite(labels[i])) throw FormatError(path.string() + ": non-finite value", row.line);
  }
  return Dataset(std::move(inputs), std::move(labels), std::move(prov));
}

}  // namespace twolayer
