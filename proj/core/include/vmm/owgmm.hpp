#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "vmm/moments.hpp"
#include "vmm/optimize.hpp"

namespace vmm {

/// Finite set of instrument functions f_l : R^{d_z} -> R^m.
struct InstrumentBasis {
  using Function = std::function<Vector(const Vector& z)>;

  std::vector<Function> functions;
  Index output_dim = 1;

  Index size() const { return static_cast<Index>(functions.size()); }

  /// 1, z_0, z_0^2, ..., z_0^degree (scalar residuals).
  static InstrumentBasis polynomial(int degree);
  /// 1, z_0, ..., z_{d-1} (scalar residuals).
  static InstrumentBasis affine(Index instrument_dim);
};

/// (n m) x k matrix with row k_out * n + i holding f_l(Z_i)_{k_out} in column l.
Matrix evaluate_instruments(const InstrumentBasis& basis, const Dataset& data);

/// g_l(theta) = E_n[f_l(Z)^T rho(X; theta)].
Vector empirical_moments(const InstrumentBasis& basis, const MomentProblem& problem, const Dataset& data,
                         const Vector& theta);

/// Gamma_lj = E_n[f_l(Z)^T rho(X; prior) rho(X; prior)^T f_j(Z)].
SymMatrix gamma_matrix(const InstrumentBasis& basis, const MomentProblem& problem, const Dataset& data,
                       const Vector& theta_prior);

/// g(theta)^T Gamma^{-1} g(theta).
double owgmm_objective(const InstrumentBasis& basis, const MomentProblem& problem, const Dataset& data,
                       const Vector& theta, const SymMatrix& gamma);

/// Value of the variational game restricted to the span of the basis with no
/// regularizer, at adversary f = F^T v:
///   E_n[(F^T v)^T rho(theta)] - 1/4 E_n[((F^T v)^T rho(prior))^2].
double span_game_value(const InstrumentBasis& basis, const MomentProblem& problem, const Dataset& data,
                       const Vector& theta, const Vector& theta_prior, const Vector& v);

enum class FirstStageWeight { kGammaAtPrior, kIdentity };

struct OwgmmConfig {
  int steps = 2;
  FirstStageWeight first_stage = FirstStageWeight::kGammaAtPrior;
  QuasiNewtonOptions optimizer;
  int restarts = 5;
  std::optional<Box> box;
  std::uint64_t seed = 0;
};

struct OwgmmEstimate {
  Vector theta;
  SymMatrix gamma;
  double objective = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<Vector> stage_thetas;
};

/// Minimizes the Gamma^{-1}-weighted moment norm. With steps = 2 the weight
/// is recomputed at the stage-one estimate and the objective re-minimized.
OwgmmEstimate owgmm_estimate(const InstrumentBasis& basis, const MomentProblem& problem, const Dataset& data,
                             const Vector& theta_prior, const OwgmmConfig& config);

}  // namespace vmm
