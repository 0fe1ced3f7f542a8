#include <cmath>
#include <cstring>

#include "internal.hpp"
#include "vmm/errors.hpp"

namespace vmm::verify {

using namespace detail;

DgpSpec standard_design(DgpKind kind, std::uint64_t seed) {
  DgpSpec spec;
  spec.kind = kind;
  spec.theta0 = Vector::Constant(1, 1.0);
  spec.a = 1.0;
  spec.sigma = 1.0;
  spec.rho_c = 0.5;
  spec.seed = seed;
  return spec;
}

EstimatorConfig kernel_vmm_estimator(int k, double theta_init, bool intervals) {
  EstimatorConfig config;
  config.kind = EstimatorKind::kKernelVmm;
  config.k = k;
  config.theta_init = Vector::Constant(1, theta_init);
  config.intervals = intervals;
  config.label = "kernel-vmm k=" + std::to_string(k) + fmt(" init=%g", theta_init);
  return config;
}

EfficiencyRun efficiency_experiment(std::uint64_t seed, const SuiteOptions& options, Index reps, Index n) {
  const DgpSpec spec = standard_design(DgpKind::kLinearIvHomoskedastic, seed);
  EfficiencyRun run;
  run.result = run_monte_carlo(spec, kernel_vmm_estimator(2, 0.0, true), n, reps, options.parallel, options.threads);
  run.analytic_variance = spec.sigma * spec.sigma / (spec.a * spec.a);
  return run;
}

std::vector<Check> efficiency_checks(const EfficiencyRun& run) {
  const double var = run.result.summary.scaled_variance(0);
  Check c;
  c.name = "variance of sqrt(n)(theta_hat - theta0) within 20% of sigma^2/a^2";
  c.value = std::abs(var - run.analytic_variance) / run.analytic_variance;
  c.threshold = 0.2;
  c.passed = c.value <= c.threshold && run.result.summary.failed == 0;
  c.detail = fmt("mc_variance=%.6g analytic=%.6g", var, run.analytic_variance) +
             " failed=" + std::to_string(run.result.summary.failed);
  return {c};
}

std::vector<Check> coverage_checks(const EfficiencyRun& run) {
  const double cov = run.result.summary.coverage(0);
  Check c;
  c.name = "95% Wald coverage in [0.90, 0.98]";
  c.value = cov;
  c.threshold = 0.90;
  c.passed = cov >= 0.90 && cov <= 0.98;
  c.detail = fmt("coverage=%.4f reps=%g", cov, static_cast<double>(run.result.summary.successes));
  return {c};
}

Comparison kstep_experiment(std::uint64_t seed, const SuiteOptions& options, Index reps, Index n) {
  const DgpSpec spec = standard_design(DgpKind::kLinearIvHeteroskedastic, seed);
  const std::vector<EstimatorConfig> configs{kernel_vmm_estimator(1, -3.0, false), kernel_vmm_estimator(2, -3.0, false)};
  return compare_estimators(spec, configs, n, reps, options.parallel, options.threads);
}

std::vector<Check> kstep_checks(const Comparison& cmp) {
  const double ratio = cmp.variance_ratio[1](0);
  Check c;
  c.name = "variance ratio 2-step / 1-step with poor prior <= 1.05";
  c.value = ratio;
  c.threshold = 1.05;
  c.passed = ratio <= 1.05 && cmp.common_reps == cmp.results[0].reps;
  c.detail = fmt("var_1step=%.6g var_2step=%.6g", cmp.results[0].summary.scaled_variance(0),
                 cmp.results[1].summary.scaled_variance(0));
  return {c};
}

std::vector<MonteCarloResult> consistency_experiment(std::uint64_t seed, const SuiteOptions& options, Index reps) {
  const DgpSpec spec = standard_design(DgpKind::kLinearIvHomoskedastic, seed);
  std::vector<MonteCarloResult> runs;
  for (Index n : {200, 800, 3200}) {
    runs.push_back(run_monte_carlo(spec, kernel_vmm_estimator(2, 0.0, false), n, reps, options.parallel, options.threads));
  }
  return runs;
}

std::vector<Check> consistency_checks(const std::vector<MonteCarloResult>& runs) {
  std::vector<Check> out;
  bool decreasing = true;
  std::string detail;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    detail += (i ? " " : "") + fmt("n=%g:%.5f", static_cast<double>(runs[i].n), runs[i].summary.median_abs_error(0));
    if (i > 0) decreasing = decreasing && runs[i].summary.median_abs_error(0) < runs[i - 1].summary.median_abs_error(0);
  }
  Check mono;
  mono.name = "median |theta_hat - theta0| strictly decreasing in n";
  mono.value = decreasing ? 1.0 : 0.0;
  mono.threshold = 1.0;
  mono.passed = decreasing;
  mono.detail = detail;
  out.push_back(mono);

  Check level;
  level.name = "median |theta_hat - theta0| < 0.1 at the largest n";
  level.value = runs.back().summary.median_abs_error(0);
  level.threshold = 0.1;
  level.passed = level.value < 0.1;
  out.push_back(level);

  Check rmse;
  rmse.name = "RMSE at the largest n below RMSE at the smallest n";
  rmse.value = runs.back().summary.rmse(0);
  rmse.threshold = runs.front().summary.rmse(0);
  rmse.passed = rmse.value < rmse.threshold;
  out.push_back(rmse);

  Index failed = 0;
  for (const auto& r : runs) failed += r.summary.failed;
  Check fails;
  fails.name = "no failed reps";
  fails.value = static_cast<double>(failed);
  fails.threshold = 0.0;
  fails.passed = failed == 0;
  out.push_back(fails);
  return out;
}

namespace {

template <typename Body>
SuiteReport experiment_suite(const std::string& name, std::uint64_t seed, Body body) {
  return timed_suite(name, seed, [&](SuiteReport& report) { report.checks = body(); });
}

}  // namespace

SuiteReport kstep_suite(std::uint64_t seed, const SuiteOptions& options) {
  return experiment_suite("kstep", seed, [&] { return kstep_checks(kstep_experiment(seed, options)); });
}

SuiteReport efficiency_suite(std::uint64_t seed, const SuiteOptions& options) {
  return experiment_suite("efficiency", seed, [&] { return efficiency_checks(efficiency_experiment(seed, options)); });
}

SuiteReport coverage_suite(std::uint64_t seed, const SuiteOptions& options) {
  return experiment_suite("coverage", seed, [&] { return coverage_checks(efficiency_experiment(seed, options)); });
}

SuiteReport consistency_suite(std::uint64_t seed, const SuiteOptions& options) {
  return experiment_suite("consistency", seed, [&] { return consistency_checks(consistency_experiment(seed, options)); });
}

bool SuiteReport::passed() const { return failures() == 0; }

Index SuiteReport::failures() const {
  Index count = 0;
  for (const Check& c : checks) count += c.passed ? 0 : 1;
  return count;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"lemma1",     "lemma6",   "lemma7",   "variational-identity",
                                              "gradients",  "kstep",    "efficiency", "coverage",
                                              "neural-dominance", "consistency"};
  return names;
}

bool is_suite(const std::string& name) {
  for (const std::string& s : suite_names()) {
    if (s == name) return true;
  }
  return false;
}

SuiteReport run_suite(const std::string& name, std::uint64_t seed, const SuiteOptions& options) {
  if (name == "lemma1") return span_equivalence_suite(seed);
  if (name == "lemma6") return closed_form_suite(seed);
  if (name == "lemma7") return kernel_iv_suite(seed);
  if (name == "variational-identity") return variational_identity_suite(seed);
  if (name == "gradients") return gradients_suite(seed);
  if (name == "kstep") return kstep_suite(seed, options);
  if (name == "efficiency") return efficiency_suite(seed, options);
  if (name == "coverage") return coverage_suite(seed, options);
  if (name == "neural-dominance") return neural_dominance_suite(seed);
  if (name == "consistency") return consistency_suite(seed, options);
  raise(ErrorCode::kInvalidArgument, "unknown suite '" + name + "'");
}

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

bool same_bits(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Index i = 0; i < a.size(); ++i) {
    if (!same_bits(a(i), b(i))) return false;
  }
  return true;
}

}  // namespace

bool identical(const SuiteReport& a, const SuiteReport& b) {
  if (a.suite != b.suite || a.seed != b.seed || a.checks.size() != b.checks.size()) return false;
  for (std::size_t i = 0; i < a.checks.size(); ++i) {
    const Check& x = a.checks[i];
    const Check& y = b.checks[i];
    if (x.name != y.name || x.passed != y.passed || !same_bits(x.value, y.value) ||
        !same_bits(x.threshold, y.threshold) || x.detail != y.detail) {
      return false;
    }
  }
  return true;
}

bool identical(const MonteCarloResult& a, const MonteCarloResult& b) {
  if (a.n != b.n || a.reps != b.reps || a.rep_results.size() != b.rep_results.size()) return false;
  for (std::size_t r = 0; r < a.rep_results.size(); ++r) {
    const RepResult& x = a.rep_results[r];
    const RepResult& y = b.rep_results[r];
    if (x.index != y.index || x.seed != y.seed || x.ok != y.ok || x.error != y.error || !same_bits(x.theta, y.theta) ||
        x.intervals.size() != y.intervals.size()) {
      return false;
    }
    for (std::size_t j = 0; j < x.intervals.size(); ++j) {
      if (!same_bits(x.intervals[j].lower, y.intervals[j].lower) || !same_bits(x.intervals[j].upper, y.intervals[j].upper)) {
        return false;
      }
    }
  }
  const MonteCarloSummary& s = a.summary;
  const MonteCarloSummary& t = b.summary;
  return s.successes == t.successes && s.failed == t.failed && same_bits(s.bias, t.bias) &&
         same_bits(s.scaled_variance, t.scaled_variance) && same_bits(s.rmse, t.rmse) &&
         same_bits(s.median_abs_error, t.median_abs_error) && same_bits(s.coverage, t.coverage);
}

}  // namespace vmm::verify
