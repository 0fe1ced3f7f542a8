#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vmm/kernel_vmm.hpp"
#include "vmm/kernels.hpp"
#include "vmm/moments.hpp"

namespace vmm {

/// Nadaraya-Watson regression with a ridge floor in the denominator:
/// prediction(z) = sum_i w_i(z) target_i, w_i(z) = K(z, z_i) / (sum_j K(z, z_j) + ridge).
class ConditionalRegressor {
 public:
  ConditionalRegressor(KernelSpec spec, double ridge, Matrix points, Matrix targets);

  const KernelSpec& spec() const { return spec_; }
  double ridge() const { return ridge_; }
  Index target_dim() const { return targets_.cols(); }

  Vector predict(const Vector& z) const;
  /// One prediction per row of `zs`.
  Matrix predict_batch(const Matrix& zs) const;

 private:
  KernelSpec spec_;
  double ridge_;
  Matrix points_;
  Matrix targets_;
};

struct RegressionConfig {
  /// Defaults to a Gaussian kernel with the median-heuristic bandwidth.
  std::optional<KernelSpec> kernel;
  double ridge = 1e-8;
  /// The floor on V-hat eigenvalues is eigenvalue_floor * tr(V-hat) / m.
  double eigenvalue_floor = 1e-6;
};

ConditionalRegressor fit_conditional(const Matrix& zs, const Matrix& targets, const KernelSpec& spec,
                                     double ridge = 1e-8);

/// Conditional quantities at an instrument value: g(z) = E[d rho / d theta | z]
/// (m x b) and V(z) = E[rho rho^T | z] (m x m).
struct ConditionalModel {
  std::function<Matrix(const Vector& z)> jacobian_mean;
  std::function<Matrix(const Vector& z)> second_moment;
};

/// (1/n) sum_i g(z_i)^T V(z_i)^{-1} g(z_i) with g and V estimated by
/// Nadaraya-Watson at theta_hat.
SymMatrix omega0_plug_in(const MomentProblem& problem, const Dataset& data, const Vector& theta_hat,
                         const RegressionConfig& config = {});
/// Same sum with the conditional quantities supplied by the caller.
SymMatrix omega0_plug_in(const ConditionalModel& model, const Dataset& data, const RegressionConfig& config = {});

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double x) const { return lower <= x && x <= upper; }
};

struct InferenceReport {
  Index n = 0;
  Vector theta;
  SymMatrix omega;
  SymMatrix delta;
  /// Omega^{-1} Delta Omega^{-1}.
  SymMatrix asymptotic_covariance;
  /// asymptotic_covariance / n.
  SymMatrix covariance;
  /// sqrt of the diagonal of covariance.
  Vector standard_errors;
  double level = 0.05;
  std::vector<Interval> intervals;
  /// The prior and the estimate coincide, so Delta-hat should match Omega-hat.
  bool efficient = false;
  double jitter_used = 0.0;
  std::vector<std::string> warnings;
};

/// Sandwich covariance in Gram coordinates. With A = L M L the weight of
/// `assembly`, M = (Q(prior) + alpha L)^{-1}:
///   Omega-hat = Jac^T A Jac / n^2,
///   Delta-hat = Jac^T L M (Q(theta_hat) + alpha L) M L Jac / n^2,
/// so Delta-hat equals Omega-hat when the prior and the estimate coincide.
InferenceReport sandwich_covariance(const GramAssembly& assembly, const MomentProblem& problem, const Dataset& data,
                                    const Vector& theta_hat, const Vector& theta_prior, double level = 0.05);

/// theta_i -/+ z_{1 - level/2} sqrt(covariance_ii).
std::vector<Interval> wald_intervals(const Vector& theta, const SymMatrix& covariance, double level = 0.05);

/// Inverse of the standard normal CDF.
double normal_quantile(double p);

}  // namespace vmm
