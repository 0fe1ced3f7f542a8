#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vmm/cli.hpp"
#include "vmm/errors.hpp"
#include "vmm/verify.hpp"
#include "vmm/version.hpp"

namespace vmm::cli {

namespace {

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json matrix_json(const Matrix& m) {
  Json a = Json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
  return a;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

Json inference_json(const InferenceReport& r, const Vector& prior) {
  Json intervals = Json::array();
  for (const Interval& iv : r.intervals) intervals.push_back({{"lower", iv.lower}, {"upper", iv.upper}});
  return {{"method", "sandwich"},
          {"level", r.level},
          {"prior", vector_json(prior)},
          {"standard_errors", vector_json(r.standard_errors)},
          {"intervals", intervals},
          {"covariance", matrix_json(r.covariance.matrix())},
          {"asymptotic_covariance", matrix_json(r.asymptotic_covariance.matrix())},
          {"omega", matrix_json(r.omega.matrix())},
          {"delta", matrix_json(r.delta.matrix())},
          {"efficient", r.efficient}};
}

// Estimation input assembled from the CSV.
struct Input {
  Dataset data;
  ProblemPtr problem;
  Matrix z;
  Matrix t;
  Vector y;
};

Input load_input(EstimateConfig& cfg) {
  const CsvTable table = read_csv(cfg.data);
  std::vector<std::size_t> cols;
  for (const std::string& c : cfg.z_columns) cols.push_back(table.column(c, "z"));
  for (const std::string& c : cfg.t_columns) cols.push_back(table.column(c, "t"));
  cols.push_back(table.column(cfg.y_column, "y"));
  const auto n = static_cast<Index>(table.rows.size());
  if (n < 2) throw UsageError(cfg.data + ": need at least two data rows");

  const auto dz = static_cast<Index>(cfg.z_columns.size());
  const auto dt = static_cast<Index>(cfg.t_columns.size());
  RecordMatrix records(n, dz + dt + 1);
  for (Index i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      records(i, static_cast<Index>(c)) = table.rows[static_cast<std::size_t>(i)][cols[c]];
    }
  }
  Input in;
  in.z = records.leftCols(dz);
  in.t = records.middleCols(dz, dt);
  in.y = records.col(dz + dt);
  const IvLayout layout = IvLayout::contiguous(dz, dt);
  try {
    if (cfg.problem == "quantile_iv") {
      if (!cfg.temperature) cfg.temperature = default_smoothing(in.y).temperature;
      in.problem = quantile_iv_problem(cfg.quantile, SmoothingConfig{*cfg.temperature}, layout);
    } else {
      in.problem = linear_iv_problem(layout);
    }
    in.data = make_dataset(*in.problem, std::move(records));
    EstimatorSettings& est = cfg.estimator;
    if (est.config.kernels.empty()) est.config.kernels.push_back(default_kernel(in.data));
    if (!est.config.theta_init) est.config.theta_init = Vector::Zero(dt);
    if (est.kind == "kernel-iv" && !est.kernel_g) est.kernel_g = KernelSpec::gaussian(median_bandwidth(in.t));
  } catch (const Error& e) {
    throw UsageError(cfg.data + ": " + e.what());
  }
  return in;
}

void write_residuals(const std::string& path, const Matrix& residuals) {
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write " + path);
  f << "row";
  for (Index k = 0; k < residuals.cols(); ++k) f << ",residual" << (residuals.cols() > 1 ? std::to_string(k + 1) : "");
  f << '\n';
  for (Index i = 0; i < residuals.rows(); ++i) {
    f << i;
    for (Index k = 0; k < residuals.cols(); ++k) f << ',' << num(residuals(i, k));
    f << '\n';
  }
}

Json residual_diagnostics(const Matrix& residuals) {
  const Vector mean = residuals.colwise().mean().transpose();
  Vector sd(residuals.cols());
  for (Index k = 0; k < residuals.cols(); ++k) {
    sd(k) = std::sqrt((residuals.col(k).array() - mean(k)).square().sum() / static_cast<double>(residuals.rows() - 1));
  }
  return {{"mean", vector_json(mean)}, {"sd", vector_json(sd)}};
}

struct Outcome {
  Json estimate;
  Json inference;
  Json diagnostics;
  Matrix residuals;
};

Outcome estimate_parametric(const EstimateConfig& cfg, const Input& in) {
  const EstimatorConfig& c = cfg.estimator.config;
  const MomentProblem& problem = *in.problem;
  const Dataset& data = in.data;
  const double alpha = c.vmm.alpha(data.size());

  Outcome o;
  Vector theta;
  Vector prior;
  double estimator_objective = 0.0;
  bool converged = false;
  std::shared_ptr<const GramAssembly> assembly;
  Json stages = Json::array();
  if (cfg.estimator.kind == "kernel-vmm") {
    const VmmSolution sol = k_step_estimate(problem, data, c.kernels, c.k, *c.theta_init, c.vmm);
    theta = sol.theta;
    estimator_objective = sol.objective;
    converged = sol.converged;
    assembly = sol.assembly;
    prior = c.k >= 2 ? sol.stage_thetas[static_cast<std::size_t>(c.k - 2)] : *c.theta_init;
    for (const Vector& s : sol.stage_thetas) stages.push_back(vector_json(s));
    o.diagnostics["gradient_norm"] = sol.gradient_norm;
  } else {
    EstimatorConfig run = c;
    run.kind = estimator_kind_from_string(cfg.estimator.kind);
    run.intervals = false;
    const EstimatorOutput est = run_estimator(run, problem, data);
    theta = est.theta;
    estimator_objective = est.objective;
    converged = est.converged;
    prior = theta;
    assembly = std::make_shared<const GramAssembly>(assemble(problem, data, c.kernels, prior, alpha));
  }
  if (!theta.allFinite()) raise(ErrorCode::kOptimizerDiverged, "non-finite estimate");

  o.estimate = {{"estimator", cfg.estimator.kind},
                {"theta", vector_json(theta)},
                {"objective", objective(*assembly, problem, data, theta)},
                {"estimator_objective", estimator_objective},
                {"converged", converged},
                {"stage_thetas", stages}};
  o.inference = nullptr;
  Json warnings = Json::array();
  if (c.intervals) {
    const InferenceReport rep = sandwich_covariance(*assembly, problem, data, theta, prior, c.level);
    o.inference = inference_json(rep, prior);
    for (const std::string& w : rep.warnings) warnings.push_back(w);
  }
  if (!converged) warnings.push_back("optimizer did not report convergence");
  o.residuals = residual_matrix(problem, data, theta);
  o.diagnostics["n"] = data.size();
  o.diagnostics["alpha"] = alpha;
  o.diagnostics["jitter_used"] = assembly->jitter_used();
  o.diagnostics["residuals"] = residual_diagnostics(o.residuals);
  o.diagnostics["warnings"] = warnings;
  return o;
}

Outcome estimate_kernel_iv(const EstimateConfig& cfg, const Input& in) {
  const EstimatorConfig& c = cfg.estimator.config;
  const KernelIvData kd{in.z, in.t, in.y};
  const Index n = in.data.size();
  const double alpha = c.vmm.alpha(n);
  std::function<double(const Vector&)> prior = [](const Vector&) { return 0.0; };
  KernelIvResult result;
  for (int round = 0; round < c.k; ++round) {
    result = kernel_iv_closed_form(kd, c.kernels.front(), *cfg.estimator.kernel_g, prior, alpha, cfg.estimator.lambda);
    prior = [result](const Vector& t) { return result.predict(t); };
  }
  if (!result.beta.allFinite()) raise(ErrorCode::kOptimizerDiverged, "non-finite kernel IV coefficients");

  Outcome o;
  o.residuals = Matrix(n, 1);
  o.residuals.col(0) = in.y - result.predict(in.t);
  o.estimate = {{"estimator", "kernel-iv"}, {"beta", vector_json(result.beta)}, {"theta", nullptr}, {"objective", nullptr}};
  o.inference = nullptr;
  o.diagnostics = {{"n", n},
                   {"alpha", alpha},
                   {"jitter_used", result.jitter_used},
                   {"residuals", residual_diagnostics(o.residuals)},
                   {"warnings", Json::array({"kernel-iv estimates a function; no parametric intervals"})}};
  return o;
}

int run_estimate(EstimateConfig cfg, std::ostream& out, std::ostream& err) {
  finalize(cfg);
  cfg.validate();
  const Input in = load_input(cfg);
  Outcome o;
  try {
    o = cfg.estimator.kind == "kernel-iv" ? estimate_kernel_iv(cfg, in) : estimate_parametric(cfg, in);
  } catch (const std::exception& e) {
    err << "estimation failed: " << e.what() << '\n';
    return kExitEstimation;
  }
  Json report;
  report["config"] = to_json(cfg);
  report["estimate"] = o.estimate;
  report["inference"] = o.inference;
  report["diagnostics"] = o.diagnostics;
  report["version"] = kVersion;
  report["timestamp"] = timestamp();
  write_json(cfg.out, report);
  if (cfg.residuals) write_residuals(*cfg.residuals, o.residuals);
  out << "wrote " << cfg.out << '\n';
  return kExitOk;
}

void write_rep_table(const std::filesystem::path& path, const MonteCarloResult& mc) {
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write " + path.string());
  const Index b = mc.theta0.size();
  const auto suffix = [b](Index j) { return b > 1 ? std::to_string(j + 1) : std::string(); };
  f << "rep,seed,ok";
  for (Index j = 0; j < b; ++j) f << ",theta" << suffix(j);
  for (Index j = 0; j < b; ++j) f << ",lower" << suffix(j) << ",upper" << suffix(j);
  f << ",runtime_seconds,error\n";
  for (const RepResult& r : mc.rep_results) {
    f << r.index << ',' << r.seed << ',' << (r.ok ? 1 : 0);
    for (Index j = 0; j < b; ++j) f << ',' << (r.ok ? num(r.theta(j)) : "");
    for (Index j = 0; j < b; ++j) {
      const bool has = r.ok && static_cast<Index>(r.intervals.size()) > j;
      f << ',' << (has ? num(r.intervals[static_cast<std::size_t>(j)].lower) : "") << ','
        << (has ? num(r.intervals[static_cast<std::size_t>(j)].upper) : "");
    }
    f << ',' << num(r.runtime_seconds) << ',' << csv_quote(r.error) << '\n';
  }
}

Json efficiency_json(const SimulateConfig& cfg, const MonteCarloResult& mc) {
  if (cfg.dgp.kind != DgpKind::kLinearIvHomoskedastic || mc.summary.successes < 2) return nullptr;
  const double bound = cfg.dgp.sigma * cfg.dgp.sigma / (cfg.dgp.a * cfg.dgp.a);
  Vector rel = (mc.summary.scaled_variance.array() - bound).abs() / bound;
  const bool passed = (rel.array() <= cfg.efficiency_band).all();
  return {{"analytic_variance", bound},
          {"band", cfg.efficiency_band},
          {"mc_variance", vector_json(mc.summary.scaled_variance)},
          {"relative_error", vector_json(rel)},
          {"passed", passed}};
}

int run_simulate(SimulateConfig cfg, bool parallel, unsigned threads, std::ostream& out, std::ostream& err) {
  finalize(cfg);
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw UsageError("cannot create " + cfg.out_dir + ": " + ec.message());

  EstimatorConfig est = cfg.estimator.config;
  est.kind = estimator_kind_from_string(cfg.estimator.kind);
  MonteCarloResult mc;
  try {
    mc = run_monte_carlo(cfg.dgp, est, cfg.n, cfg.reps, parallel, threads);
  } catch (const std::exception& e) {
    err << "simulation failed: " << e.what() << '\n';
    return kExitEstimation;
  }
  const MonteCarloSummary& s = mc.summary;
  Json summary;
  summary["config"] = to_json(cfg);
  summary["summary"] = {{"n", mc.n},
                        {"reps", mc.reps},
                        {"theta0", vector_json(mc.theta0)},
                        {"successes", s.successes},
                        {"failed", s.failed},
                        {"bias", vector_json(s.bias)},
                        {"scaled_variance", vector_json(s.scaled_variance)},
                        {"rmse", vector_json(s.rmse)},
                        {"median_abs_error", vector_json(s.median_abs_error)},
                        {"coverage", vector_json(s.coverage)}};
  summary["efficiency"] = efficiency_json(cfg, mc);
  summary["diagnostics"] = {{"execution", {{"parallel", parallel}, {"threads", threads}}},
                            {"timing", {{"mean_runtime_seconds", s.mean_runtime_seconds}}}};
  summary["version"] = kVersion;
  summary["timestamp"] = timestamp();

  const std::filesystem::path dir(cfg.out_dir);
  write_rep_table(dir / "reps.csv", mc);
  write_json(dir / "summary.json", summary);
  out << "wrote " << (dir / "reps.csv").string() << " and " << (dir / "summary.json").string() << '\n';
  if (s.successes == 0) {
    err << "every replication failed\n";
    return kExitEstimation;
  }
  return kExitOk;
}

Json report_json(const verify::SuiteReport& r) {
  Json checks = Json::array();
  for (const verify::Check& c : r.checks) {
    checks.push_back(
        {{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"threshold", c.threshold}, {"detail", c.detail}});
  }
  return {{"suite", r.suite},
          {"seed", r.seed},
          {"passed", r.passed()},
          {"failures", r.failures()},
          {"checks", checks},
          {"runtime_seconds", r.runtime_seconds},
          {"version", kVersion}};
}

int run_verify(const std::string& suite, std::uint64_t seed, bool parallel, unsigned threads,
               const std::string& out_path, std::ostream& out, std::ostream& err) {
  if (!verify::is_suite(suite)) {
    err << "unknown suite '" << suite << "'; available:";
    for (const std::string& s : verify::suite_names()) err << ' ' << s;
    err << '\n';
    return kExitUsage;
  }
  const verify::SuiteReport report = verify::run_suite(suite, seed, {parallel, threads});
  const Json j = report_json(report);
  if (!out_path.empty()) write_json(out_path, j);
  out << format_json(j) << '\n';
  err << suite << ": " << report.checks.size() - static_cast<std::size_t>(report.failures()) << "/"
      << report.checks.size() << " checks passed\n";
  return report.passed() ? kExitOk : kExitVerificationFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variational method of moments estimators", "vmm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  auto* est = app.add_subcommand("estimate", "Estimate theta on a CSV dataset");
  std::string est_config, est_data, est_out, est_residuals, est_kind;
  int est_k = 0;
  std::uint64_t est_seed = 0;
  double est_level = 0.0;
  est->add_option("--config", est_config, "JSON configuration file");
  auto* o_data = est->add_option("--data", est_data, "CSV input");
  auto* o_out = est->add_option("--out", est_out, "JSON report path");
  auto* o_res = est->add_option("--residuals", est_residuals, "optional CSV of fitted residuals");
  auto* o_kind = est->add_option("--estimator", est_kind, "owgmm, kernel-vmm, kernel-iv or neural-vmm");
  auto* o_k = est->add_option("--k", est_k, "rounds of the k-step estimator");
  auto* o_seed = est->add_option("--seed", est_seed, "seed");
  auto* o_level = est->add_option("--level", est_level, "interval level, 0.05 for 95%");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo experiment on a synthetic design");
  std::string sim_config, sim_out;
  Index sim_n = 0, sim_reps = 0;
  std::uint64_t sim_seed = 0;
  unsigned sim_threads = 0;
  bool sim_serial = false;
  sim->add_option("--config", sim_config, "JSON configuration file");
  auto* s_out = sim->add_option("--out-dir", sim_out, "output directory");
  auto* s_n = sim->add_option("--n", sim_n, "sample size");
  auto* s_reps = sim->add_option("--reps", sim_reps, "replications");
  auto* s_seed = sim->add_option("--seed", sim_seed, "master seed");
  sim->add_option("--threads", sim_threads, "worker threads, 0 for all cores");
  sim->add_flag("--serial", sim_serial, "run replications on one thread");

  auto* ver = app.add_subcommand("verify", "Run a verification suite");
  std::string suite, ver_out;
  std::uint64_t ver_seed = 0;
  unsigned ver_threads = 0;
  bool ver_serial = false;
  ver->add_option("suite", suite, "suite name")->required();
  ver->add_option("--seed", ver_seed, "seed");
  ver->add_option("--out", ver_out, "also write the JSON report here");
  ver->add_option("--threads", ver_threads, "worker threads, 0 for all cores");
  ver->add_flag("--serial", ver_serial, "single-threaded");

  std::vector<const char*> argv{"vmm"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*est) {
      EstimateConfig cfg = est_config.empty() ? EstimateConfig{} : estimate_config_from_json(load_json_file(est_config));
      if (*o_data) cfg.data = est_data;
      if (*o_out) cfg.out = est_out;
      if (*o_res) cfg.residuals = est_residuals;
      if (*o_kind) cfg.estimator.kind = est_kind;
      if (*o_k) cfg.estimator.config.k = est_k;
      if (*o_seed) cfg.seed = est_seed;
      if (*o_level) cfg.estimator.config.level = est_level;
      return run_estimate(std::move(cfg), out, err);
    }
    if (*sim) {
      SimulateConfig cfg = sim_config.empty() ? SimulateConfig{} : simulate_config_from_json(load_json_file(sim_config));
      if (*s_out) cfg.out_dir = sim_out;
      if (*s_n) cfg.n = sim_n;
      if (*s_reps) cfg.reps = sim_reps;
      if (*s_seed) cfg.seed = sim_seed;
      return run_simulate(std::move(cfg), !sim_serial, sim_threads, out, err);
    }
    return run_verify(suite, ver_seed, !ver_serial, ver_threads, ver_out, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace vmm::cli
