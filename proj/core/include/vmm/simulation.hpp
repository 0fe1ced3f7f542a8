#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vmm/inference.hpp"
#include "vmm/kernel_vmm.hpp"
#include "vmm/moments.hpp"
#include "vmm/neural_vmm.hpp"
#include "vmm/owgmm.hpp"

namespace vmm {

enum class DgpKind { kLinearIvHomoskedastic, kLinearIvHeteroskedastic, kQuantileIv, kDensityRatioChain };

std::string to_string(DgpKind kind);
DgpKind dgp_kind_from_string(const std::string& name);

/// Noise scale functions for the heteroskedastic design.
enum class HeteroScale { kSqrtOnePlusSquare };

std::string to_string(HeteroScale scale);
HeteroScale hetero_scale_from_string(const std::string& name);

/// Linear IV designs: Z ~ N(0, I_b), U ~ N(0, 1),
///   T_l = a Z_l + rho_c U + nu_l,
///   Y = theta0^T T + sigma (rho_c U + sqrt(1 - rho_c^2) e) * s(Z),
/// with s = 1 for the homoskedastic design and s(Z) = sqrt(1 + |Z|^2) otherwise.
/// The quantile design shifts the outcome noise so its conditional p-quantile is 0.
///
/// The chain design is a two-state chain whose action is the next state with
/// probability `chain_fidelity`. Records are [s, a, s'] along one trajectory
/// started from the behavior policy's stationary distribution.
struct DgpSpec {
  DgpKind kind = DgpKind::kLinearIvHomoskedastic;
  Vector theta0 = Vector::Constant(1, 1.0);
  double a = 1.0;
  double sigma = 1.0;
  double rho_c = 0.5;
  HeteroScale hetero_scale = HeteroScale::kSqrtOnePlusSquare;
  double quantile = 0.5;
  std::optional<double> smoothing_temperature;
  /// P(a = 1 | s) for s = 0, 1.
  std::vector<double> behavior_policy{0.5, 0.5};
  std::vector<double> target_policy{0.8, 0.8};
  double chain_fidelity = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
  Index param_dim() const;
};

/// Moment problem matching a design, in the coordinates that sample_dgp's
/// truth refers to. The chain problem pins the first density-ratio coordinate at 1.
ProblemPtr dgp_problem(const DgpSpec& spec);
/// True parameter in the coordinates of dgp_problem.
Vector dgp_true_theta(const DgpSpec& spec);
/// Stationary distribution (P(s = 0), P(s = 1)) of the chain under a policy.
Vector chain_stationary(const std::vector<double>& policy, double fidelity);

Dataset sample_dgp(const DgpSpec& spec, Index n);
Dataset sample_dgp(const DgpSpec& spec, Index n, std::uint64_t seed);

enum class EstimatorKind { kKernelVmm, kOwgmm, kNeuralVmm };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& name);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::kKernelVmm;
  std::string label;
  /// Rounds of kernel VMM.
  int k = 2;
  /// Starting prior; zero when unset.
  std::optional<Vector> theta_init;
  /// Empty means a Gaussian kernel with the median-heuristic bandwidth.
  std::vector<KernelSpec> kernels;
  VmmConfig vmm;
  bool intervals = true;
  double level = 0.05;
  /// Polynomial instrument basis degree for OWGMM.
  int basis_degree = 1;
  OwgmmConfig owgmm;
  Index net_width = 50;
  Index net_depth = 3;
  /// Frobenius (sigma = 1) unless neural_kernel_regularizer is set.
  bool neural_kernel_regularizer = false;
  double neural_alpha = 0.01;
  MinimaxConfig minimax;

  void validate() const;
};

struct EstimatorOutput {
  Vector theta;
  double objective = 0.0;
  bool converged = false;
  std::optional<InferenceReport> inference;
};

EstimatorOutput run_estimator(const EstimatorConfig& config, const MomentProblem& problem, const Dataset& data);

struct RepResult {
  Index index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  Vector theta;
  std::vector<Interval> intervals;
  double runtime_seconds = 0.0;
};

struct MonteCarloSummary {
  Index successes = 0;
  Index failed = 0;
  Vector bias;
  /// Sample variance (denominator count - 1) of sqrt(n) (theta_hat - theta0); zero for a single rep.
  Vector scaled_variance;
  Vector rmse;
  Vector median_abs_error;
  /// NaN when no rep produced intervals.
  Vector coverage;
  double mean_runtime_seconds = 0.0;
};

struct MonteCarloResult {
  Index n = 0;
  Index reps = 0;
  Vector theta0;
  std::vector<RepResult> rep_results;
  MonteCarloSummary summary;
};

/// Summary over the successful reps. Sums use a fixed pairwise tree, so the
/// result depends only on the table.
MonteCarloSummary summarize(const std::vector<RepResult>& reps, const Vector& theta0, Index n);

/// Rep r draws its data from derive_seed(spec.seed, r).
MonteCarloResult run_monte_carlo(const DgpSpec& spec, const EstimatorConfig& config, Index n, Index reps,
                                 bool parallel, unsigned threads = 0);

struct Comparison {
  std::vector<MonteCarloResult> results;
  /// Reps where every configuration succeeded.
  Index common_reps = 0;
  /// Per configuration, per coordinate: variance over common reps divided by
  /// that of the first configuration.
  std::vector<Vector> variance_ratio;
  /// Per configuration, per coordinate: RMSE minus the first configuration's RMSE.
  std::vector<Vector> rmse_difference;
};

/// All configurations see the same datasets.
Comparison compare_estimators(const DgpSpec& spec, const std::vector<EstimatorConfig>& configs, Index n, Index reps,
                              bool parallel, unsigned threads = 0);

/// Sum in a fixed binary tree over index ranges.
double pairwise_sum(const std::vector<double>& values);

}  // namespace vmm
