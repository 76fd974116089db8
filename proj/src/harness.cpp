#include "twolayer/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "csv_io.hpp"
#include "json_io.hpp"
#include "parallel.hpp"
#include "report_json.hpp"
#include "twolayer/errors.hpp"
#include "twolayer/model.hpp"

namespace twolayer {

using detail::json;

namespace {

TeacherSpec teacher_from_json(const json& j) {
  TeacherSpec t;
  for (const auto& [k, v] : j.items()) {
    if (k == "activation") t.activation = v.get<std::string>();
    else if (k == "seed") t.seed = v.get<std::uint64_t>();
    else if (k == "hidden") t.hidden = v.is_null() ? std::nullopt : std::optional(v.get<Eigen::Index>());
    else if (k == "W_scale") t.W_scale = v.get<double>();
    else if (k == "theta_scale") t.theta_scale = v.get<double>();
    else throw ConfigError("unknown teacher key '" + k + "'");
  }
  return t;
}

DatasetSpec dataset_from_json(const json& j) {
  DatasetSpec d;
  for (const auto& [k, v] : j.items()) {
    if (k == "path") d.path = v.get<std::string>();
    else if (k == "d") d.d = v.get<Eigen::Index>();
    else if (k == "N") d.N = v.get<Eigen::Index>();
    else if (k == "distribution") d.distribution = parse_distribution(v.get<std::string>());
    else if (k == "seed") d.seed = v.get<std::uint64_t>();
    else if (k == "teacher") d.teacher = v.is_null() ? std::nullopt : std::optional(teacher_from_json(v));
    else if (k == "label_noise_std") d.label_noise_std = v.get<double>();
    else if (k == "label_noise_seed") d.label_noise_seed = v.get<std::uint64_t>();
    else throw ConfigError("unknown dataset key '" + k + "'");
  }
  return d;
}

}  // namespace

ExperimentSpec spec_from_json(std::string_view text) {
  ExperimentSpec spec;
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (k == "name") spec.name = v.get<std::string>();
      else if (k == "dataset") {
        if (v.is_string()) spec.dataset.path = v.get<std::string>();
        else spec.dataset = dataset_from_json(v);
      } else if (k == "activation") spec.activation = v.get<std::string>();
      else if (k == "run") spec.run = run_config_from_json(v.dump());
      else if (k == "repetitions") spec.repetitions = v.get<std::size_t>();
      else if (k == "out") spec.out_dir = v.get<std::string>();
      else if (k == "suites") spec.suites = v.get<std::vector<std::string>>();
      else if (k == "rank_tol") spec.rank_tol = v.get<double>();
      else if (k == "trials") spec.trials = v.is_null() ? std::nullopt : std::optional(v.get<std::size_t>());
      else throw ConfigError("unknown experiment spec key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment spec: ") + e.what());
  } catch (const NameError& e) {
    throw ConfigError(std::string("experiment spec: ") + e.what());
  }
  return spec;
}

std::string spec_to_json(const ExperimentSpec& spec) {
  json ds;
  const auto& d = spec.dataset;
  if (d.path) ds["path"] = d.path->string();
  ds["d"] = d.d;
  ds["N"] = d.N;
  ds["distribution"] = to_string(d.distribution);
  ds["seed"] = d.seed;
  ds["label_noise_std"] = d.label_noise_std;
  ds["label_noise_seed"] = d.label_noise_seed;
  if (d.teacher) {
    const auto& t = *d.teacher;
    ds["teacher"] = {{"activation", t.activation},
                     {"seed", t.seed},
                     {"hidden", t.hidden ? json(*t.hidden) : json(nullptr)},
                     {"W_scale", t.W_scale},
                     {"theta_scale", t.theta_scale}};
  } else {
    ds["teacher"] = nullptr;
  }
  json j{{"name", spec.name},
         {"dataset", std::move(ds)},
         {"activation", spec.activation},
         {"run", json::parse(run_config_to_json(spec.run))},
         {"repetitions", spec.repetitions},
         {"out", spec.out_dir.string()},
         {"suites", spec.suites},
         {"rank_tol", spec.rank_tol}};
  j["trials"] = spec.trials ? json(*spec.trials) : json(nullptr);
  return j.dump(2);
}

void validate(const ExperimentSpec& spec) {
  if (spec.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  try {
    builtin_activation(spec.activation);
    if (spec.dataset.teacher) builtin_activation(spec.dataset.teacher->activation);
  } catch (const NameError& e) {
    throw ConfigError(e.what());
  }
  if (!(spec.rank_tol > 0.0 && spec.rank_tol < 1.0)) throw ConfigError("rank_tol must be in (0, 1)");
  for (const auto& s : spec.suites) {
    if (std::find(suite_names().begin(), suite_names().end(), s) == suite_names().end()) {
      throw ConfigError("unknown suite '" + s + "'");
    }
  }
  const auto& d = spec.dataset;
  if (d.path) {
    if (!std::filesystem::exists(*d.path)) {
      throw ConfigError("dataset file does not exist: " + d.path->string());
    }
  } else {
    if (d.d < 1 || d.N < 1) throw ConfigError("dataset needs d >= 1 and N >= 1");
    if (!(d.label_noise_std >= 0.0)) throw ConfigError("label_noise_std must be >= 0");
    if (d.teacher && d.teacher->hidden && (*d.teacher->hidden < 1 || *d.teacher->hidden > d.d)) {
      throw ConfigError("teacher hidden width must be in [1, d]");
    }
  }
  spec.run.resolved().validate();
}

NetworkParams teacher_params(const TeacherSpec& t, Eigen::Index d) {
  const auto n = t.hidden.value_or(d);
  if (n < 1 || n > d) throw ConfigError("teacher hidden width must be in [1, d]");
  Rng rng(t.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  NetworkParams p;
  p.W.resize(n, d);
  const double sd = t.W_scale / std::sqrt(static_cast<double>(d));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < d; ++k) p.W(j, k) = sd * normal(rng);
  p.theta.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) p.theta[j] = t.theta_scale * normal(rng);
  return p;
}

Dataset materialize_dataset(const DatasetSpec& spec) {
  if (spec.path) return load(*spec.path);
  const auto U = generate_inputs(spec.d, spec.N, spec.distribution, spec.seed);
  Provenance prov;
  Eigen::VectorXd labels;
  if (spec.teacher) {
    Teacher teacher{teacher_params(*spec.teacher, spec.d), spec.teacher->activation};
    auto labeled = label_with_teacher(U, teacher, spec.label_noise_std, spec.label_noise_seed);
    prov = labeled.provenance();
    labels = labeled.labels();
  } else {
    // Without a teacher the labels are pure noise of the given std (1 if unset).
    const double sd = spec.label_noise_std > 0.0 ? spec.label_noise_std : 1.0;
    Rng rng(spec.label_noise_seed);
    std::normal_distribution<double> normal(0.0, sd);
    labels.resize(spec.N);
    for (Eigen::Index i = 0; i < spec.N; ++i) labels[i] = normal(rng);
    prov.label_noise_std = sd;
    prov.label_noise_seed = spec.label_noise_seed;
  }
  prov.distribution = to_string(spec.distribution);
  prov.seed = spec.seed;
  return Dataset(U, std::move(labels), std::move(prov));
}

unsigned thread_cap(std::size_t jobs) {
  unsigned cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TWOLAYER_OPT_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) {
      throw ConfigError(std::string("TWOLAYER_OPT_THREADS must be a positive integer, got '") +
                        env + "'");
    }
    cap = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::min<std::size_t>(cap, std::max<std::size_t>(jobs, 1)));
}

std::vector<RepOutcome> train_repetitions(const ExperimentSpec& spec, const Dataset& ds,
                                          unsigned threads) {
  if (spec.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  const auto& act = builtin_activation(spec.activation);
  std::vector<RepOutcome> out(spec.repetitions);
  detail::parallel_for(spec.repetitions, threads, [&](std::size_t r) {
    RunConfig cfg = spec.run;
    cfg.seed = spec.run.seed + r;
    const auto t0 = std::chrono::steady_clock::now();
    out[r].result = run(act, ds, cfg);
    out[r].wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out[r].rep = r;
    out[r].seed = cfg.seed;
  });
  return out;
}

std::string to_json_string(const SuiteReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    json details = json::object();
    for (const auto& [k, v] : c.details) details[k] = detail::number(v);
    checks.push_back({{"name", c.name},
                      {"measured", detail::number(c.measured)},
                      {"relation", c.relation},
                      {"threshold", detail::number(c.threshold)},
                      {"passed", c.passed},
                      {"details", std::move(details)}});
  }
  json j{{"suite", r.suite},
         {"passed", r.passed},
         {"wall_seconds", r.wall_seconds},
         {"checks", std::move(checks)}};
  return j.dump(2);
}

std::vector<std::filesystem::path> emit_plotdata(const std::filesystem::path& run_dir,
                                                 const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(run_dir)) throw IoError("run directory not found: " + run_dir.string());

  std::vector<std::pair<std::size_t, fs::path>> sources;
  if (fs::exists(run_dir / "trajectory.csv")) {
    sources.emplace_back(0, run_dir / "trajectory.csv");
  } else {
    for (const auto& entry : fs::directory_iterator(run_dir)) {
      const auto name = entry.path().filename().string();
      if (!entry.is_directory() || name.rfind("rep_", 0) != 0) continue;
      const auto traj = entry.path() / "trajectory.csv";
      if (!fs::exists(traj)) continue;
      std::size_t r = 0;
      try {
        r = std::stoul(name.substr(4));
      } catch (const std::exception&) {
        continue;
      }
      sources.emplace_back(r, traj);
    }
    std::sort(sources.begin(), sources.end());
  }
  if (sources.empty()) throw IoError("no trajectory.csv found under " + run_dir.string());

  std::vector<std::size_t> rep_ids;
  std::vector<TrajectoryRecord> trajs;
  for (const auto& [r, path] : sources) {
    rep_ids.push_back(r);
    trajs.push_back(read_trajectory_csv(path));
  }

  fs::create_directories(out_dir);
  const auto& cols = trajectory_columns();
  auto value = [](const TrajectoryRow& row, std::size_t c) -> double {
    switch (c) {
      case 1: return row.f;
      case 2: return row.grad_norm_F;
      case 3: return row.sigma_min_W;
      case 4: return row.sigma_min_D;
      case 5: return row.resid_norm;
      case 6: return static_cast<double>(row.inner_steps);
      default: return row.inner_final_f;
    }
  };

  std::vector<fs::path> written;
  for (std::size_t c = 1; c < cols.size(); ++c) {
    for (std::size_t t = 0; t < trajs.size(); ++t) {
      std::ostringstream out;
      for (const auto& row : trajs[t].rows) {
        out << row.k << ' ' << detail::format_double(value(row, c)) << '\n';
      }
      const auto path = out_dir / (cols[c] + "_rep" + std::to_string(rep_ids[t]) + ".dat");
      detail::write_text_file(path, out.str());
      written.push_back(path);
    }
  }

  std::size_t len = 0;
  for (const auto& t : trajs) len = std::max(len, t.rows.size());
  const bool aggregate = trajs.size() > 1;
  std::ostringstream csv;
  csv << "k";
  for (std::size_t c = 1; c < cols.size(); ++c) {
    for (auto r : rep_ids) csv << ',' << cols[c] << "_rep" << r;
    if (aggregate) csv << ',' << cols[c] << "_mean," << cols[c] << "_min," << cols[c] << "_max";
  }
  csv << '\n';
  for (std::size_t i = 0; i < len; ++i) {
    csv << i;
    for (std::size_t c = 1; c < cols.size(); ++c) {
      double sum = 0.0, lo = 0.0, hi = 0.0;
      std::size_t count = 0;
      for (const auto& t : trajs) {
        csv << ',';
        if (i >= t.rows.size()) continue;  // shorter run (stopped on grad_tol)
        const double v = value(t.rows[i], c);
        csv << detail::format_double(v);
        lo = count ? std::min(lo, v) : v;
        hi = count ? std::max(hi, v) : v;
        sum += v;
        ++count;
      }
      if (aggregate) {
        csv << ',' << detail::format_double(sum / static_cast<double>(count)) << ','
            << detail::format_double(lo) << ',' << detail::format_double(hi);
      }
    }
    csv << '\n';
  }
  const auto combined = out_dir / "combined.csv";
  detail::write_text_file(combined, csv.str());
  written.push_back(combined);
  return written;
}

}  // namespace twolayer
