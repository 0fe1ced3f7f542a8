#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vmm/numerics.hpp"

namespace vmm {

using RecordMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A conditional moment problem E[rho(X; theta0) | Z] = 0 with Z a function
/// of the raw record X. Records are flat real vectors with a layout fixed at
/// construction.
class MomentProblem {
 public:
  virtual ~MomentProblem() = default;

  virtual Index residual_dim() const = 0;
  virtual Index param_dim() const = 0;
  virtual Index record_dim() const = 0;
  virtual Index instrument_dim() const = 0;

  virtual Vector residual(std::span<const double> x, const Vector& theta) const = 0;
  /// m x b matrix d rho / d theta.
  virtual Matrix jacobian(std::span<const double> x, const Vector& theta) const = 0;
  virtual Vector instrument(std::span<const double> x) const = 0;

  /// True when rho(x; theta) = rho(x; 0) + jacobian(x) theta exactly.
  virtual bool affine_in_theta() const { return false; }
  virtual std::string name() const = 0;

 protected:
  void check_record(std::span<const double> x) const;
  void check_theta(const Vector& theta) const;
};

using ProblemPtr = std::shared_ptr<const MomentProblem>;

struct Dataset {
  RecordMatrix records;  // n x record_dim
  Matrix instruments;    // n x d_z

  Index size() const { return records.rows(); }
  std::span<const double> record(Index i) const {
    return {records.data() + i * records.cols(), static_cast<std::size_t>(records.cols())};
  }
};

/// Builds a dataset, projecting every record onto its instrument.
Dataset make_dataset(const MomentProblem& problem, RecordMatrix records);

/// n x m matrix with entry (i, k) = rho_k(x_i; theta).
Matrix residual_matrix(const MomentProblem& problem, const Dataset& data, const Vector& theta);

/// (n m) x b stacked Jacobian; row k * n + i holds d rho_k(x_i) / d theta.
Matrix stacked_jacobian(const MomentProblem& problem, const Dataset& data, const Vector& theta);

/// Output-dimension-major flattening of an n x m residual matrix: index k * n + i.
inline Vector flatten_residuals(const Matrix& residuals) {
  return Eigen::Map<const Vector>(residuals.data(), residuals.size());
}

/// Column positions of instrument, treatment and outcome inside a record.
struct IvLayout {
  std::vector<Index> z;
  std::vector<Index> t;
  Index y = 0;

  /// Record = [z (dz), t (dt), y].
  static IvLayout contiguous(Index dz, Index dt);
  Index record_dim() const;
};

/// rho(x; theta) = y - theta^T t.
ProblemPtr linear_iv_problem(const IvLayout& layout);
/// Contiguous layout with d_z = b.
ProblemPtr linear_iv_problem(Index b);

struct SmoothingConfig {
  double temperature = 0.05;
};

/// 0.05 * sample standard deviation of the outcomes.
SmoothingConfig default_smoothing(const Vector& outcomes);

/// rho(x; theta) = sigmoid((theta^T t - y) / tau) - p, a smoothed version of
/// 1{y <= theta^T t} - p.
ProblemPtr quantile_iv_problem(double p, SmoothingConfig smoothing, const IvLayout& layout);

using PolicyFn = std::function<double(double action, std::span<const double> state)>;
using FeatureFn = std::function<Vector(std::span<const double> state)>;

/// Record = [s (state_dim), a, s' (state_dim)], Z = s'. With d(s; theta) =
/// theta^T phi(s), rho = d(s) pi_e(a|s) / pi_b(a|s) - d(s').
ProblemPtr density_ratio_problem(PolicyFn pi_e, PolicyFn pi_b, FeatureFn phi, Index basis_dim, Index state_dim);

/// Fixes coordinate `index` of theta at `value`; the returned problem has
/// parameter dimension b - 1. Used to remove the scale freedom of the
/// density-ratio problem.
ProblemPtr pin_coordinate(ProblemPtr base, Index index, double value);
Vector expand_pinned(const Vector& free_theta, Index index, double value);

/// Rescales theta so that the sample mean of d(S_i; theta) over the dataset's
/// current states is one.
Vector normalize_density_ratio(const Vector& theta, const FeatureFn& phi, const Dataset& data, Index state_dim);

}  // namespace vmm
