#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vmm/simulation.hpp"

namespace vmm::verify {

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::uint64_t seed = 0;
  std::vector<Check> checks;
  /// Wall-clock time; not part of the reproducible output.
  double runtime_seconds = 0.0;

  bool passed() const;
  Index failures() const;
};

struct SuiteOptions {
  bool parallel = true;
  unsigned threads = 0;
};

const std::vector<std::string>& suite_names();
bool is_suite(const std::string& name);
SuiteReport run_suite(const std::string& name, std::uint64_t seed, const SuiteOptions& options = {});

/// Same names, flags and bit-identical values.
bool identical(const SuiteReport& a, const SuiteReport& b);
bool identical(const MonteCarloResult& a, const MonteCarloResult& b);

SuiteReport span_equivalence_suite(std::uint64_t seed);
SuiteReport closed_form_suite(std::uint64_t seed);
SuiteReport kernel_iv_suite(std::uint64_t seed);
SuiteReport variational_identity_suite(std::uint64_t seed);
SuiteReport gradients_suite(std::uint64_t seed);
SuiteReport neural_dominance_suite(std::uint64_t seed);

/// Designs used by the Monte Carlo suites: theta0 = 1, a = 1, sigma = 1, rho_c = 0.5.
DgpSpec standard_design(DgpKind kind, std::uint64_t seed);
/// k-step kernel VMM from a constant prior.
EstimatorConfig kernel_vmm_estimator(int k, double theta_init, bool intervals);

struct EfficiencyRun {
  MonteCarloResult result;
  double analytic_variance = 0.0;
};
EfficiencyRun efficiency_experiment(std::uint64_t seed, const SuiteOptions& options, Index reps = 500, Index n = 1000);
std::vector<Check> efficiency_checks(const EfficiencyRun& run);
std::vector<Check> coverage_checks(const EfficiencyRun& run);

Comparison kstep_experiment(std::uint64_t seed, const SuiteOptions& options, Index reps = 300, Index n = 1000);
std::vector<Check> kstep_checks(const Comparison& cmp);

std::vector<MonteCarloResult> consistency_experiment(std::uint64_t seed, const SuiteOptions& options, Index reps = 200);
std::vector<Check> consistency_checks(const std::vector<MonteCarloResult>& runs);

SuiteReport kstep_suite(std::uint64_t seed, const SuiteOptions& options);
SuiteReport efficiency_suite(std::uint64_t seed, const SuiteOptions& options);
SuiteReport coverage_suite(std::uint64_t seed, const SuiteOptions& options);
SuiteReport consistency_suite(std::uint64_t seed, const SuiteOptions& options);

}  // namespace vmm::verify
