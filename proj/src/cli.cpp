#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>

#include "csv_io.hpp"
#include "json_io.hpp"
#include "report_json.hpp"
#include "twolayer/errors.hpp"
#include "twolayer/harness.hpp"
#include "twolayer/model.hpp"

namespace twolayer {

using detail::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitSuiteFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct GlobalOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> activation;
  std::optional<double> rank_tol;
  bool force = false;
};

ExperimentSpec load_spec(const GlobalOpts& g) {
  ExperimentSpec spec;
  if (!g.config.empty()) {
    if (!fs::exists(g.config)) throw ConfigError("config file not found: " + g.config);
    spec = spec_from_json(detail::read_text_file(g.config));
  }
  if (g.seed) spec.run.seed = *g.seed;
  if (g.out) spec.out_dir = *g.out;
  if (g.activation) spec.activation = *g.activation;
  if (g.rank_tol) spec.rank_tol = *g.rank_tol;
  return spec;
}

void refuse_overwrite(const fs::path& p, bool force) {
  if (!force && fs::exists(p)) {
    throw ConfigError("refusing to overwrite " + p.string() + " (pass --force)");
  }
}

void write_json(const fs::path& p, const json& j) { detail::write_text_file(p, j.dump(2) + "\n"); }

// ----------------------------------------------------------------- generate

struct GenerateOpts {
  std::optional<Eigen::Index> d, N;
  std::optional<std::string> distribution, teacher, file;
  std::optional<std::uint64_t> teacher_seed;
  std::optional<double> noise;
  bool no_teacher = false;
  bool warn_overparam = false;
};

int cmd_generate(const GlobalOpts& g, const GenerateOpts& o) {
  auto spec = load_spec(g);
  auto& ds = spec.dataset;
  ds.path.reset();
  if (o.d) ds.d = *o.d;
  if (o.N) ds.N = *o.N;
  if (o.distribution) {
    try {
      ds.distribution = parse_distribution(*o.distribution);
    } catch (const NameError& e) {
      throw ConfigError(e.what());
    }
  }
  if (g.seed) ds.seed = *g.seed;
  if (o.no_teacher) ds.teacher.reset();
  if (o.teacher) {
    if (!ds.teacher) ds.teacher = TeacherSpec{};
    ds.teacher->activation = *o.teacher;
  }
  if (o.teacher_seed && ds.teacher) ds.teacher->seed = *o.teacher_seed;
  if (o.noise) ds.label_noise_std = *o.noise;
  validate(spec);

  if (o.warn_overparam && ds.N > ds.d * ds.d) {
    std::cerr << "warning: N = " << ds.N << " exceeds d^2 = " << ds.d * ds.d
              << "; the full-rank guarantees need N <= d^2, i.e. fewer samples than "
                 "hidden-layer parameters\n";
  }

  const fs::path file = o.file ? fs::path(*o.file) : spec.out_dir / "dataset.csv";
  refuse_overwrite(file, g.force);
  refuse_overwrite(sidecar_path(file), g.force);
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const auto data = materialize_dataset(ds);
  save(data, file);
  std::cout << "wrote " << file.string() << " (d=" << data.dim() << ", N=" << data.size()
            << ") and " << sidecar_path(file).string() << "\n";
  return kExitPass;
}

// -------------------------------------------------------------------- train

struct TrainOpts {
  std::optional<std::string> data;
  std::optional<std::size_t> reps, N_o, N_i;
  std::optional<double> sigma, R, grad_tol;
  bool theorem2 = false;
  bool early_exit = false;
};

int cmd_train(const GlobalOpts& g, const TrainOpts& o) {
  auto spec = load_spec(g);
  if (o.data) spec.dataset.path = *o.data;
  if (o.reps) spec.repetitions = *o.reps;
  if (o.N_o) spec.run.N_o = *o.N_o;
  if (o.N_i) spec.run.N_i = *o.N_i;
  if (o.sigma) spec.run.sigma = *o.sigma;
  if (o.R) spec.run.R = *o.R;
  if (o.grad_tol) spec.run.grad_tol = *o.grad_tol;
  if (o.theorem2) spec.run.theorem2_preset = true;
  if (o.early_exit) spec.run.early_exit = true;
  validate(spec);

  const auto& out = spec.out_dir;
  if (fs::exists(out)) {
    std::vector<fs::path> stale;
    for (const auto& e : fs::directory_iterator(out)) {
      const auto name = e.path().filename().string();
      if (name == "summary.json" || name.rfind("rep_", 0) == 0) stale.push_back(e.path());
    }
    if (!stale.empty() && !g.force) {
      throw ConfigError("run artifacts already exist in " + out.string() + " (pass --force)");
    }
    for (const auto& p : stale) fs::remove_all(p);
  }
  fs::create_directories(out);

  const auto ds = materialize_dataset(spec.dataset);
  std::string data_ref;
  if (spec.dataset.path) {
    data_ref = spec.dataset.path->string();
  } else {
    const auto p = out / "dataset.csv";
    save(ds, p);
    data_ref = p.string();
  }

  const unsigned threads = thread_cap(spec.repetitions);
  const auto reps = train_repetitions(spec, ds, threads);

  json summary_reps = json::array();
  std::printf("%-4s %-8s %-14s %-14s %-14s %-6s\n", "rep", "seed", "final_f", "min_grad_norm",
              "min_sigma_D", "rows");
  for (const auto& r : reps) {
    const auto dir = out / ("rep_" + std::to_string(r.rep));
    fs::create_directories(dir);
    const auto& rows = r.result.trajectory.rows;
    write_trajectory_csv(r.result.trajectory, dir / "trajectory.csv");
    save_params(r.result.params, spec.activation, dir / "params.csv");

    double min_grad = rows.front().grad_norm_F, min_sd = rows.front().sigma_min_D;
    for (const auto& row : rows) {
      min_grad = std::min(min_grad, row.grad_norm_F);
      min_sd = std::min(min_sd, row.sigma_min_D);
    }
    const auto& info = r.result.info;
    json manifest{{"name", spec.name},
                  {"rep", r.rep},
                  {"seed", r.seed},
                  {"activation", spec.activation},
                  {"dataset", {{"path", data_ref}, {"d", ds.dim()}, {"N", ds.size()}}},
                  {"run", detail::report_json(info)},
                  {"derived",
                   {{"N_i", info.config.N_i},
                    {"sigma", info.config.sigma},
                    {"gamma", detail::number(info.gamma)},
                    {"L", detail::number(info.L)},
                    {"L_theta_max", detail::number(info.L_theta_max)}}},
                  {"rows", rows.size()},
                  {"final", {{"f", rows.back().f},
                             {"grad_norm_F", rows.back().grad_norm_F},
                             {"sigma_min_D", rows.back().sigma_min_D}}},
                  {"wall_seconds", r.wall_seconds}};
    if (info.config.theorem2_preset && info.config.N_o > 0) {
      const double R = info.config.R;
      manifest["theorem2_bound"] = detail::number(
          2.0 * info.L * (info.f0 + R * R * (info.L_theta_max + 0.5) + 1.0) /
          static_cast<double>(info.config.N_o));
    }
    write_json(dir / "manifest.json", manifest);
    summary_reps.push_back({{"rep", r.rep},
                            {"seed", r.seed},
                            {"final_f", rows.back().f},
                            {"min_grad_norm", min_grad},
                            {"min_sigma_min_D", min_sd}});
    std::printf("%-4zu %-8llu %-14.6e %-14.6e %-14.6e %-6zu\n", r.rep,
                static_cast<unsigned long long>(r.seed), rows.back().f, min_grad, min_sd,
                rows.size());
  }
  // Written last, after every repetition finished.
  write_json(out / "summary.json", {{"name", spec.name},
                                    {"repetitions", spec.repetitions},
                                    {"threads", threads},
                                    {"dataset", data_ref},
                                    {"spec", json::parse(spec_to_json(spec))},
                                    {"reps", summary_reps}});
  return kExitPass;
}

// ----------------------------------------------------------------- diagnose

struct DiagnoseOpts {
  std::optional<std::string> data, params;
};

int cmd_diagnose(const GlobalOpts& g, const DiagnoseOpts& o) {
  auto spec = load_spec(g);
  if (o.data) spec.dataset.path = *o.data;
  std::string act_name = spec.activation;
  NetworkParams p;
  const auto ds = [&] {
    validate(spec);
    return materialize_dataset(spec.dataset);
  }();
  if (o.params) {
    auto loaded = load_params(*o.params);
    p = loaded.params;
    if (!g.activation && !loaded.activation.empty()) act_name = loaded.activation;
  } else {
    Rng rng(spec.run.seed);
    p = initialize(spec.run.hidden.value_or(ds.dim()), ds.dim(), spec.run, rng);
  }
  check_shapes(p, ds);
  const auto& a = [&]() -> const ActivationFunction& {
    try {
      return builtin_activation(act_name);
    } catch (const NameError& e) {
      throw ConfigError(e.what());
    }
  }();

  const double tol = spec.rank_tol;
  const auto W_rank = svd_rank(p.W, tol);
  const auto sys = stationarity_system(p, a, ds);
  const auto D_rank = svd_rank(sys.D, tol);
  const auto coll = collection_rank(a, p.W, ds.inputs(), tol);
  const auto lip = lipschitz_estimates(p, a, ds);
  const double L_ball = lipschitz_W_bound_on_ball(a, ds, spec.run.radius());
  const auto cert = certify(p, a, ds, tol);

  std::vector<std::pair<double, double>> intervals;
  Rng rng(spec.run.seed + 17);
  std::uniform_real_distribution<double> unif(-5.0, 4.9);
  for (int i = 0; i < 20; ++i) {
    const double lo = unif(rng);
    intervals.emplace_back(lo, std::min(5.0, lo + 0.1 + 0.9 * (unif(rng) + 5.0) / 9.9));
  }
  const auto c1 = c1_probe(a, intervals, 64, 1e-8);

  std::printf("activation        %s\n", a.name().c_str());
  std::printf("shape             n=%ld d=%ld N=%ld\n", static_cast<long>(p.hidden()),
              static_cast<long>(p.input_dim()), static_cast<long>(ds.size()));
  std::printf("loss              %.6e\n", cert.loss_value);
  std::printf("||grad_W f||_F    %.6e\n", cert.grad_norm);
  std::printf("rank(W)           %ld / %ld   sigma_min(W) = %.6e\n",
              static_cast<long>(W_rank.numerical_rank),
              static_cast<long>(std::min(W_rank.rows, W_rank.cols)), W_rank.sigma_min);
  std::printf("rank(D)           %ld / %ld   sigma_min(D) = %.6e\n",
              static_cast<long>(D_rank.numerical_rank), static_cast<long>(ds.size()),
              cert.sigma_min_D);
  std::printf("rank(features)    %ld / %ld\n", static_cast<long>(coll.numerical_rank),
              static_cast<long>(std::min(coll.rows, coll.cols)));
  std::printf("L_W (at theta)    %.6e\n", lip.L_W_bound);
  std::printf("L_W (on ball)     %.6e\n", L_ball);
  std::printf("L_theta exact     %.6e\n", lip.L_theta_exact);
  if (lip.L_theta_bound_analytic) {
    std::printf("L_theta u^2 n     %.6e\n", *lip.L_theta_bound_analytic);
  }
  std::printf("||s||_2           %.6e   bound %.6e\n", cert.residual_norm, cert.certified_bound);
  std::printf("verdict           %s\n", to_string(cert.verdict).c_str());
  std::printf("C1 probe          %s (heuristic)\n", c1.verdict ? "no interval flagged" : "flagged");

  const auto path = spec.out_dir / "diagnostics.json";
  refuse_overwrite(path, g.force);
  fs::create_directories(spec.out_dir);
  write_json(path, {{"activation", a.name()},
                    {"n", p.hidden()},
                    {"d", p.input_dim()},
                    {"N", ds.size()},
                    {"W_rank", detail::report_json(W_rank)},
                    {"D_rank", detail::report_json(D_rank)},
                    {"feature_collection_rank", detail::report_json(coll)},
                    {"lipschitz", detail::report_json(lip)},
                    {"L_W_bound_on_ball", detail::number(L_ball)},
                    {"certificate", detail::report_json(cert)},
                    {"c1_probe", detail::report_json(c1)}});
  std::printf("wrote %s\n", path.string().c_str());
  return kExitPass;
}

// ------------------------------------------------------------------- verify

struct VerifyOpts {
  std::string suite;
  std::optional<std::size_t> trials;
};

int cmd_verify(const GlobalOpts& g, const VerifyOpts& o) {
  auto spec = load_spec(g);
  if (o.trials) spec.trials = *o.trials;
  std::vector<std::string> suites;
  if (o.suite == "all") {
    suites = suite_names();
  } else if (std::find(suite_names().begin(), suite_names().end(), o.suite) !=
             suite_names().end()) {
    suites.push_back(o.suite);
  } else {
    throw ConfigError("unknown suite '" + o.suite + "'");
  }
  validate(spec);
  const unsigned threads = thread_cap(64);
  json reports = json::array();
  bool all_pass = true;
  for (const auto& s : suites) {
    const auto rep = run_suite(s, spec, threads);
    all_pass = all_pass && rep.passed;
    reports.push_back(json::parse(to_json_string(rep)));
  }
  const json result = suites.size() == 1 ? reports.front()
                                         : json{{"suite", "all"},
                                                {"passed", all_pass},
                                                {"reports", reports}};
  std::cout << result.dump(2) << "\n";
  if (g.out) {
    const auto path = fs::path(*g.out) / ("verify_" + o.suite + ".json");
    refuse_overwrite(path, g.force);
    fs::create_directories(*g.out);
    write_json(path, result);
  }
  return all_pass ? kExitPass : kExitSuiteFail;
}

// ----------------------------------------------------------------- plotdata

int cmd_plotdata(const GlobalOpts& g, const std::string& run_dir) {
  const fs::path out = g.out ? fs::path(*g.out) : fs::path(run_dir) / "plot";
  refuse_overwrite(out / "combined.csv", g.force);
  const auto files = emit_plotdata(run_dir, out);
  std::cout << "wrote " << files.size() << " files to " << out.string() << "\n";
  return kExitPass;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Two-layer network training with stationarity certificates"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config, "Experiment spec (JSON)");
  app.add_option("--seed", g.seed, "Run seed (dataset seed for generate)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--activation", g.activation, "Activation name");
  app.add_option("--rank-tol", g.rank_tol, "Relative singular value cutoff");
  app.add_flag("--force", g.force, "Overwrite existing outputs");

  GenerateOpts gen;
  auto* generate = app.add_subcommand("generate", "Generate a dataset (CSV + sidecar)");
  generate->add_option("--d", gen.d, "Input dimension");
  generate->add_option("--N", gen.N, "Number of samples");
  generate->add_option("--distribution", gen.distribution, "uniform_cube | std_gaussian");
  generate->add_option("--teacher", gen.teacher, "Teacher activation");
  generate->add_option("--teacher-seed", gen.teacher_seed, "Teacher seed");
  generate->add_flag("--no-teacher", gen.no_teacher, "Gaussian labels instead of a teacher");
  generate->add_option("--noise", gen.noise, "Label noise standard deviation");
  generate->add_option("--file", gen.file, "Output CSV path (default <out>/dataset.csv)");
  generate->add_flag("--warn-overparam", gen.warn_overparam, "Warn when N > d^2");

  TrainOpts tr;
  auto* train = app.add_subcommand("train", "Run the alternating SGD/GD algorithm");
  train->add_option("--data", tr.data, "Dataset CSV");
  train->add_option("--reps", tr.reps, "Repetitions (seeds seed, seed+1, ...)");
  train->add_option("--N_o", tr.N_o, "Outer iterations");
  train->add_option("--N_i", tr.N_i, "Inner iterations");
  train->add_option("--sigma", tr.sigma, "Inner gradient noise");
  train->add_option("--R", tr.R, "Ball diameter");
  train->add_option("--grad-tol", tr.grad_tol, "Stop once ||grad_W f||_F <= tol");
  train->add_flag("--theorem2", tr.theorem2, "N_i = N_o, sigma = 1/sqrt(N_i), gamma = 1/L");
  train->add_flag("--early-exit", tr.early_exit, "Stop inner loops once f improves");

  DiagnoseOpts dg;
  auto* diagnose = app.add_subcommand("diagnose", "Rank, Lipschitz and certificate report");
  diagnose->add_option("--data", dg.data, "Dataset CSV");
  diagnose->add_option("--params", dg.params, "Params CSV (default: seeded initialization)");

  VerifyOpts vf;
  auto* verify = app.add_subcommand("verify", "Run a verification suite");
  verify->add_option("suite", vf.suite, "Suite name or 'all'")->required();
  verify->add_option("--trials", vf.trials, "Override the suite's trial count");

  std::string run_dir;
  auto* plotdata = app.add_subcommand("plotdata", "Plot-ready data from a run directory");
  plotdata->add_option("run_dir", run_dir, "Directory written by train")->required();

  for (auto* sub : {generate, train, diagnose, verify, plotdata}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*generate) return cmd_generate(g, gen);
    if (*train) return cmd_train(g, tr);
    if (*diagnose) return cmd_diagnose(g, dg);
    if (*verify) return cmd_verify(g, vf);
    if (*plotdata) return cmd_plotdata(g, run_dir);
  } catch (const NumericsError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}

}  // namespace twolayer
