#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "twolayer/dataset.hpp"
#include "twolayer/diagnostics.hpp"
#include "twolayer/optimizer.hpp"

namespace twolayer {

struct TeacherSpec {
  std::string activation = "sigmoid";
  std::uint64_t seed = 11;
  std::optional<Eigen::Index> hidden;  // defaults to d
  double W_scale = 1.0;                // W* entries ~ N(0, W_scale^2 / d)
  double theta_scale = 0.5;            // theta* entries ~ N(0, theta_scale^2)
};

/// Either a CSV path or generation parameters.
struct DatasetSpec {
  std::optional<std::filesystem::path> path;
  Eigen::Index d = 3;
  Eigen::Index N = 9;
  InputDistribution distribution = InputDistribution::uniform_cube;
  std::uint64_t seed = 7;
  std::optional<TeacherSpec> teacher = TeacherSpec{};
  double label_noise_std = 0.0;
  std::uint64_t label_noise_seed = 0;
};

struct ExperimentSpec {
  std::string name = "default";
  DatasetSpec dataset;
  std::string activation = "sigmoid";
  RunConfig run;
  std::size_t repetitions = 1;
  std::filesystem::path out_dir = "twolayer_out";
  std::vector<std::string> suites;
  double rank_tol = kDefaultRankTol;
  /// Overrides a verify suite's default trial/seed count.
  std::optional<std::size_t> trials;
};

/// Absent keys keep defaults; ConfigError on unknown keys or bad values.
ExperimentSpec spec_from_json(std::string_view text);
std::string spec_to_json(const ExperimentSpec& spec);
/// repetitions >= 1, known activation and suites, referenced files exist.
void validate(const ExperimentSpec& spec);

/// Teacher draw used for generated datasets.
NetworkParams teacher_params(const TeacherSpec& t, Eigen::Index d);
/// Loads spec.path or generates; provenance always filled in.
Dataset materialize_dataset(const DatasetSpec& spec);

/// Workers for `jobs` independent tasks: min(jobs, hardware threads,
/// TWOLAYER_OPT_THREADS). ConfigError on a malformed variable.
unsigned thread_cap(std::size_t jobs);

struct RepOutcome {
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  RunResult result;
  double wall_seconds = 0.0;
};

/// Repetition r uses seed spec.run.seed + r. Results are ordered by r
/// regardless of scheduling.
std::vector<RepOutcome> train_repetitions(const ExperimentSpec& spec, const Dataset& ds,
                                          unsigned threads);

/// A single measured-versus-threshold comparison.
struct Check {
  std::string name;
  double measured = 0.0;
  std::string relation;  // "<=", ">=", "<", ">"
  double threshold = 0.0;
  bool passed = false;
  std::map<std::string, double> details;
};

struct SuiteReport {
  std::string suite;
  bool passed = false;
  std::vector<Check> checks;
  double wall_seconds = 0.0;
};

const std::vector<std::string>& suite_names();
/// ConfigError on an unknown suite name.
SuiteReport run_suite(std::string_view suite, const ExperimentSpec& spec, unsigned threads = 1);
std::string to_json_string(const SuiteReport& r);

/// Combined plot data from rep_*/trajectory.csv (or a trajectory.csv directly
/// in run_dir). IoError when none exist. Returns the files written.
std::vector<std::filesystem::path> emit_plotdata(const std::filesystem::path& run_dir,
                                                 const std::filesystem::path& out_dir);

/// Command line entry point; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace twolayer
