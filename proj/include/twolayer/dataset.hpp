#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "twolayer/network_params.hpp"

namespace twolayer {

enum class InputDistribution { uniform_cube, std_gaussian };

std::string to_string(InputDistribution dist);
/// Throws NameError on an unknown name.
InputDistribution parse_distribution(std::string_view name);

/// Realizable-label generator: labels are the teacher network's outputs.
struct Teacher {
  NetworkParams params;
  std::string activation;
};

struct Provenance {
  std::string distribution = "unknown";
  std::uint64_t seed = 0;
  std::optional<Teacher> teacher;
  double label_noise_std = 0.0;
  std::uint64_t label_noise_seed = 0;
};

/// N samples (u^i, v^i); row i of inputs() is u^i. Immutable once built.
class Dataset {
 public:
  /// ShapeError on count mismatch or N == 0, NumericsError on non-finite entries.
  Dataset(Eigen::MatrixXd inputs, Eigen::VectorXd labels, Provenance provenance = {});

  const Eigen::MatrixXd& inputs() const noexcept { return inputs_; }
  const Eigen::VectorXd& labels() const noexcept { return labels_; }
  const Provenance& provenance() const noexcept { return provenance_; }

  Eigen::Index size() const noexcept { return inputs_.rows(); }
  Eigen::Index dim() const noexcept { return inputs_.cols(); }
  Eigen::VectorXd input(Eigen::Index i) const { return inputs_.row(i).transpose(); }
  double label(Eigen::Index i) const { return labels_[i]; }

  friend bool operator==(const Dataset& a, const Dataset& b);

 private:
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd labels_;
  Provenance provenance_;
};

/// N i.i.d. rows of length d. uniform_cube: coordinates U[-1, 1];
/// std_gaussian: N(0, 1). Deterministic in `seed`. ConfigError when d or N is 0.
Eigen::MatrixXd generate_inputs(Eigen::Index d, Eigen::Index N, InputDistribution dist,
                                std::uint64_t seed);

/// v^i = theta*^T h(W* u^i) (+ optional N(0, noise_std^2) label noise).
/// ShapeError when the teacher does not match the inputs.
Dataset label_with_teacher(const Eigen::MatrixXd& inputs, const Teacher& teacher,
                           double noise_std = 0.0, std::uint64_t noise_seed = 0);

/// Sidecar path for a dataset/params CSV: "dir/name.csv" -> "dir/name.meta.json".
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

/// CSV (d input columns then the label, %.17g) plus a JSON sidecar holding
/// {d, N, distribution, seed, teacher?}. Throws IoError.
void save(const Dataset& ds, const std::filesystem::path& path);

/// Throws IoError when unreadable, FormatError (with line number) when malformed.
/// A missing sidecar is tolerated: d is inferred from the column count.
Dataset load(const std::filesystem::path& path);

}  // namespace twolayer
