#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "vmm/kernels.hpp"
#include "vmm/moments.hpp"
#include "vmm/optimize.hpp"

namespace vmm {

/// Gram matrices K_k(Z_i, Z_j) for each residual dimension k. The full
/// (n m) x (n m) matrix L is block diagonal with these blocks, in
/// output-dimension-major order (index k * n + i).
class KernelGrams {
 public:
  /// `specs` holds either one shared kernel or one kernel per residual dimension.
  KernelGrams(std::vector<KernelSpec> specs, const Matrix& instruments, Index residual_dim);

  Index n() const { return n_; }
  Index m() const { return m_; }
  const Matrix& block(Index k) const;
  const KernelSpec& spec(Index k) const;

  Vector apply(const Vector& v) const;
  Matrix apply(const Matrix& v) const;
  Matrix full() const;

 private:
  std::vector<KernelSpec> specs_;
  std::vector<Matrix> blocks_;
  Index n_;
  Index m_;
};

/// Gaussian kernel with the median-heuristic bandwidth on the instruments.
KernelSpec default_kernel(const Dataset& data);

/// Closed-form weighting for J_n(theta) = (1/n^2) rho^T A rho with
/// A = L (Q(prior) + alpha L)^{-1} L.
///
/// Q(prior) = L R R^T L / n, where R is the (n m) x n matrix holding the
/// prior residuals (R_{(j,k), j} = rho_k(X_j; prior)). The push-through
/// identity gives
///   A = (1/alpha) (L - L R C^{-1} R^T L / n),   C = alpha I_n + R^T L R / n,
/// valid for any PSD L. C has eigenvalues >= alpha, so it is the only matrix
/// that gets factored.
class GramAssembly {
 public:
  GramAssembly(std::shared_ptr<const KernelGrams> grams, Matrix prior_residuals, double alpha);

  Index n() const { return grams_->n(); }
  Index m() const { return grams_->m(); }
  double alpha() const { return alpha_; }
  double jitter_used() const { return inner_.jitter_used(); }
  const KernelGrams& grams() const { return *grams_; }
  std::shared_ptr<const KernelGrams> shared_grams() const { return grams_; }
  const Matrix& prior_residuals() const { return prior_; }

  /// A v for a flattened (n m) vector.
  Vector apply_weight(const Vector& v) const;
  Matrix apply_weight(const Matrix& v) const;

  /// A, materialized. O((n m)^2 n); meant for small problems and tests.
  SymMatrix weight_matrix() const;
  /// L, materialized.
  SymMatrix kernel_matrix() const { return SymMatrix(grams_->full()); }
  /// Q(prior), materialized.
  SymMatrix prior_gram() const;

 private:
  // R x for x in R^n.
  Matrix expand(const Matrix& x) const;
  // R^T w for w in R^{n m}.
  Matrix contract(const Matrix& w) const;

  std::shared_ptr<const KernelGrams> grams_;
  Matrix prior_;
  double alpha_;
  SpdFactor inner_;
};

GramAssembly assemble(const MomentProblem& problem, const Dataset& data, const std::vector<KernelSpec>& kernels,
                      const Vector& theta_prior, double alpha);
GramAssembly assemble(std::shared_ptr<const KernelGrams> grams, const MomentProblem& problem, const Dataset& data,
                      const Vector& theta_prior, double alpha);

double objective(const GramAssembly& assembly, const MomentProblem& problem, const Dataset& data,
                 const Vector& theta);
/// (2 / n^2) Jac^T A rho.
Vector objective_gradient(const GramAssembly& assembly, const MomentProblem& problem, const Dataset& data,
                          const Vector& theta);

/// alpha_n = scale * n^{-exponent}. The default sits inside the window
/// alpha_n -> 0, alpha_n n^{1/2} -> infinity.
struct AlphaSchedule {
  double scale = 0.1;
  double exponent = 0.4;

  double operator()(Index n) const { return scale * std::pow(static_cast<double>(n), -exponent); }
  void validate() const;
};

struct VmmConfig {
  AlphaSchedule alpha;
  QuasiNewtonOptions optimizer;
  int restarts = 5;
  std::optional<Box> box;
  std::uint64_t seed = 0;

  void validate() const;
};

struct VmmSolution {
  Vector theta;
  double objective = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  double alpha = 0.0;
  std::vector<int> stage_steps;
  std::vector<Vector> stage_thetas;
  std::vector<double> stage_objectives;
  /// Assembly of the final stage (prior = second-to-last stage estimate).
  std::shared_ptr<const GramAssembly> assembly;
};

/// Minimizes J_n for an already-built assembly starting from `start`.
/// Problems that are affine in theta are solved through the normal equations.
VmmSolution minimize_assembled(std::shared_ptr<const GramAssembly> assembly, const MomentProblem& problem,
                               const Dataset& data, const Vector& start, const VmmConfig& config);

VmmSolution minimize(const MomentProblem& problem, const Dataset& data, const std::vector<KernelSpec>& kernels,
                     const Vector& theta_prior, const VmmConfig& config);

/// k rounds of kernel VMM; round j uses round j-1's estimate as the prior,
/// round 1 uses `theta0_init`.
VmmSolution k_step_estimate(const MomentProblem& problem, const Dataset& data, const std::vector<KernelSpec>& kernels,
                            int k, const Vector& theta0_init, const VmmConfig& config);

/// Data for nonparametric IV regression: instruments z, treatments t, outcomes y.
struct KernelIvData {
  Matrix z;
  Matrix t;
  Vector y;
};

struct KernelIvResult {
  Vector beta;
  Matrix t_points;
  KernelSpec kernel_g;
  double jitter_used = 0.0;

  double predict(const Vector& t) const;
  Vector predict(const Matrix& t) const;
};

/// beta* = (L_g M L_g + lambda L_g)^{-1} L_g M Y with
/// M = (1/n^2) L_f (Q(prior) + alpha L_f)^{-1} L_f and prior residuals Y_j - prior(T_j).
KernelIvResult kernel_iv_closed_form(const KernelIvData& data, const KernelSpec& kernel_f, const KernelSpec& kernel_g,
                                     const std::function<double(const Vector&)>& theta_prior, double alpha,
                                     double lambda);

}  // namespace vmm
