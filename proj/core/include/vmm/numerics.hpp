#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace vmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Dense symmetric matrix. The constructor replaces the input with
/// (A + A^T) / 2, so downstream factorizations never see rounding asymmetry.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& a);
  /// Symmetrizes in place.
  explicit SymMatrix(Matrix&& a);

  static SymMatrix identity(Index dim);
  static SymMatrix zero(Index dim);

  Index dim() const { return a_.rows(); }
  const Matrix& matrix() const { return a_; }
  double operator()(Index i, Index j) const { return a_(i, j); }
  double trace() const { return a_.trace(); }
  Matrix release() && { return std::move(a_); }

 private:
  Matrix a_;
};

/// Cholesky factor of (A + jitter * I) for the first jitter in a schedule
/// that gave a positive-definite factorization.
class SpdFactor {
 public:
  SpdFactor(Eigen::LLT<Matrix> llt, double jitter_used);

  Index dim() const { return llt_.rows(); }
  double jitter_used() const { return jitter_used_; }
  Matrix lower() const;
  /// log det(A + jitter * I)
  double log_determinant() const;

  const Eigen::LLT<Matrix>& llt() const { return llt_; }

 private:
  Eigen::LLT<Matrix> llt_;
  double jitter_used_;
};

/// [0, 1e-12, 1e-10, 1e-8, 1e-6] scaled by tr(A)/dim. Falls back to an
/// absolute scale of 1 when the trace is not positive.
std::vector<double> default_jitter_schedule(const SymMatrix& a);

SpdFactor spd_factor(const SymMatrix& a, std::span<const double> jitter_schedule);
SpdFactor spd_factor(const SymMatrix& a);

Vector spd_solve(const SpdFactor& f, const Vector& b);
Matrix spd_solve(const SpdFactor& f, const Matrix& b);

/// h^T (C + alpha I)^{-1} h, which is also the value of
/// sup_v <h, v> - 1/4 <(C + alpha I) v, v>, attained at v = 2 (C + alpha I)^{-1} h.
double variational_quadratic(const SymMatrix& c, double alpha, const Vector& h);

}  // namespace vmm
