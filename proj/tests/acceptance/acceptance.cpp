#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vmm/verify.hpp"

using namespace vmm;
using verify::Check;
using verify::SuiteOptions;
using verify::SuiteReport;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string check_detail(const std::vector<Check>& checks) {
  std::size_t ok = 0;
  const Check* first_bad = nullptr;
  for (const Check& c : checks) {
    if (c.passed) {
      ++ok;
    } else if (!first_bad) {
      first_bad = &c;
    }
  }
  std::string s = std::to_string(ok) + "/" + std::to_string(checks.size()) + " checks";
  if (checks.size() == 1) {
    char buf[160];
    std::snprintf(buf, sizeof buf, ", %s = %.4g (threshold %.4g)", checks[0].name.c_str(), checks[0].value,
                  checks[0].threshold);
    s += buf;
  }
  if (first_bad) s += "; first failure " + first_bad->name + (first_bad->detail.empty() ? "" : ": " + first_bad->detail);
  return s;
}

bool all_passed(const std::vector<Check>& checks) {
  for (const Check& c : checks) {
    if (!c.passed) return false;
  }
  return !checks.empty();
}

bool same_rep(const RepResult& a, const RepResult& b) {
  if (a.index != b.index || a.seed != b.seed || a.ok != b.ok || a.error != b.error) return false;
  if (a.theta.size() != b.theta.size() || a.intervals.size() != b.intervals.size()) return false;
  if (std::memcmp(a.theta.data(), b.theta.data(), sizeof(double) * static_cast<std::size_t>(a.theta.size())) != 0) {
    return false;
  }
  for (std::size_t i = 0; i < a.intervals.size(); ++i) {
    if (std::memcmp(&a.intervals[i].lower, &b.intervals[i].lower, sizeof(double)) != 0 ||
        std::memcmp(&a.intervals[i].upper, &b.intervals[i].upper, sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

// The rerun covers the first reps of a longer run; rep r depends only on (seed, r).
bool prefix_matches(const MonteCarloResult& full, const MonteCarloResult& prefix) {
  if (prefix.rep_results.size() > full.rep_results.size()) return false;
  for (std::size_t i = 0; i < prefix.rep_results.size(); ++i) {
    if (!same_rep(full.rep_results[i], prefix.rep_results[i])) return false;
  }
  return true;
}

class Runner {
 public:
  explicit Runner(std::set<int> only) : only_(std::move(only)) {}

  bool selected(int id) const { return only_.empty() || only_.count(id) > 0; }

  void record(int id, const std::string& title, double limit_seconds, double elapsed, const Outcome& o) {
    const bool in_time = limit_seconds <= 0.0 || elapsed < limit_seconds;
    const bool pass = o.passed && in_time;
    char timing[96];
    if (limit_seconds > 0.0) {
      std::snprintf(timing, sizeof timing, "%.1f s (limit %.0f s)", elapsed, limit_seconds);
    } else {
      std::snprintf(timing, sizeof timing, "%.1f s", elapsed);
    }
    std::printf("[%s] %2d %-40s %s; %s%s\n", pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(), timing,
                in_time ? "" : " over the time limit");
    std::fflush(stdout);
    ++total_;
    if (!pass) ++failed_;
  }

  int total() const { return total_; }
  int failed() const { return failed_; }

 private:
  std::set<int> only_;
  int total_ = 0;
  int failed_ = 0;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::uint64_t seed = 0;
  bool serial = false;
  unsigned threads = 0;
  std::vector<int> only;
  app.add_option("--seed", seed, "master seed");
  app.add_flag("--serial", serial, "run Monte Carlo reps on one thread");
  app.add_option("--threads", threads, "worker threads (0 = hardware)");
  app.add_option("--only", only, "criterion numbers to run")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  Runner runner(std::set<int>(only.begin(), only.end()));
  const SuiteOptions options{!serial, threads};
  const SuiteOptions flipped{serial, threads};

  struct Cheap {
    int id;
    std::string name;
    std::string title;
    double limit;
  };
  const std::vector<Cheap> cheap{{1, "lemma1", "OWGMM / span-VMM equivalence", 10.0},
                                 {2, "lemma6", "closed-form J_n vs representer oracle", 30.0},
                                 {3, "lemma7", "kernel IV closed form vs minimizer", 30.0},
                                 {4, "variational-identity", "variational identity", 5.0},
                                 {5, "gradients", "analytic vs finite-difference gradients", 60.0}};

  std::vector<SuiteReport> cheap_reports;
  for (const Cheap& c : cheap) {
    if (!runner.selected(c.id) && !runner.selected(11)) continue;
    const auto start = Clock::now();
    SuiteReport r = verify::run_suite(c.name, seed, options);
    const double elapsed = seconds_since(start);
    if (runner.selected(c.id)) runner.record(c.id, c.title, c.limit, elapsed, {r.passed(), check_detail(r.checks)});
    cheap_reports.push_back(std::move(r));
  }

  std::vector<MonteCarloResult> consistency;
  if (runner.selected(6) || runner.selected(11)) {
    const auto start = Clock::now();
    consistency = verify::consistency_experiment(seed, options);
    const double elapsed = seconds_since(start);
    const auto checks = verify::consistency_checks(consistency);
    if (runner.selected(6)) runner.record(6, "consistency over n = 200, 800, 3200", 600.0, elapsed,
                                          {all_passed(checks), check_detail(checks)});
  }

  verify::EfficiencyRun efficiency;
  if (runner.selected(7) || runner.selected(8) || runner.selected(11)) {
    const auto start = Clock::now();
    efficiency = verify::efficiency_experiment(seed, options);
    const double elapsed = seconds_since(start);
    const auto eff = verify::efficiency_checks(efficiency);
    const auto cov = verify::coverage_checks(efficiency);
    if (runner.selected(7)) runner.record(7, "efficiency bound, n = 1000", 900.0, elapsed, {all_passed(eff), check_detail(eff)});
    if (runner.selected(8)) runner.record(8, "Wald coverage, shared with 7", 900.0, elapsed, {all_passed(cov), check_detail(cov)});
  }

  Comparison kstep;
  if (runner.selected(9) || runner.selected(11)) {
    const auto start = Clock::now();
    kstep = verify::kstep_experiment(seed, options);
    const double elapsed = seconds_since(start);
    const auto checks = verify::kstep_checks(kstep);
    if (runner.selected(9)) runner.record(9, "2-step vs 1-step from a poor prior", 600.0, elapsed,
                                          {all_passed(checks), check_detail(checks)});
  }

  SuiteReport neural;
  if (runner.selected(10) || runner.selected(11)) {
    const auto start = Clock::now();
    neural = verify::run_suite("neural-dominance", seed, options);
    const double elapsed = seconds_since(start);
    if (runner.selected(10)) runner.record(10, "neural dominance and approximation", 600.0, elapsed,
                                           {neural.passed(), check_detail(neural.checks)});
  }

  if (runner.selected(11)) {
    const auto start = Clock::now();
    int compared = 0;
    std::string mismatch;
    const auto expect = [&](bool same, const std::string& what) {
      ++compared;
      if (!same && mismatch.empty()) mismatch = what;
    };
    for (std::size_t i = 0; i < cheap.size(); ++i) {
      expect(verify::identical(cheap_reports[i], verify::run_suite(cheap[i].name, seed, flipped)), cheap[i].name);
    }
    expect(verify::identical(neural, verify::run_suite("neural-dominance", seed, flipped)), "neural-dominance");

    const auto rerun_consistency = verify::consistency_experiment(seed, flipped, 4);
    for (std::size_t i = 0; i < consistency.size(); ++i) {
      expect(prefix_matches(consistency[i], rerun_consistency[i]), "consistency n=" + std::to_string(consistency[i].n));
    }
    expect(prefix_matches(efficiency.result, verify::efficiency_experiment(seed, flipped, 25).result), "efficiency");
    const Comparison kstep_rerun = verify::kstep_experiment(seed, flipped, 15);
    for (std::size_t i = 0; i < kstep.results.size(); ++i) {
      expect(prefix_matches(kstep.results[i], kstep_rerun.results[i]), "kstep config " + std::to_string(i));
    }

    // Full reruns through the public entry point, serial against parallel.
    DgpSpec spec = verify::standard_design(DgpKind::kLinearIvHeteroskedastic, seed);
    const EstimatorConfig est = verify::kernel_vmm_estimator(2, 0.0, true);
    expect(verify::identical(run_monte_carlo(spec, est, 300, 12, false), run_monte_carlo(spec, est, 300, 12, true, 4)),
           "heteroskedastic simulation");
    spec.kind = DgpKind::kQuantileIv;
    expect(verify::identical(run_monte_carlo(spec, est, 300, 8, true), run_monte_carlo(spec, est, 300, 8, false)),
           "quantile simulation");

    const std::string detail = std::to_string(compared) + " bitwise comparisons" +
                               (mismatch.empty() ? "" : "; mismatch in " + mismatch);
    runner.record(11, "determinism, serial and parallel", 0.0, seconds_since(start), {mismatch.empty(), detail});
  }

  std::printf("%d/%d criteria passed\n", runner.total() - runner.failed(), runner.total());
  return runner.failed() == 0 ? 0 : 1;
}
