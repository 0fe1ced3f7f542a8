#include "vmm/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vmm/errors.hpp"

namespace vmm {

SymMatrix::SymMatrix(const Matrix& a) : SymMatrix(Matrix(a)) {}

SymMatrix::SymMatrix(Matrix&& a) : a_(std::move(a)) {
  require(a_.rows() == a_.cols(), ErrorCode::kDimensionMismatch, "SymMatrix requires a square matrix");
  const Index n = a_.rows();
  constexpr Index kBlock = 64;
  for (Index jb = 0; jb < n; jb += kBlock) {
    for (Index ib = jb; ib < n; ib += kBlock) {
      const Index jend = std::min(jb + kBlock, n);
      const Index iend = std::min(ib + kBlock, n);
      for (Index j = jb; j < jend; ++j) {
        for (Index i = std::max(ib, j + 1); i < iend; ++i) {
          const double v = 0.5 * (a_(i, j) + a_(j, i));
          a_(i, j) = v;
          a_(j, i) = v;
        }
      }
    }
  }
}

SymMatrix SymMatrix::identity(Index dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

SymMatrix SymMatrix::zero(Index dim) { return SymMatrix(Matrix::Zero(dim, dim)); }

SpdFactor::SpdFactor(Eigen::LLT<Matrix> llt, double jitter_used)
    : llt_(std::move(llt)), jitter_used_(jitter_used) {}

Matrix SpdFactor::lower() const { return llt_.matrixL(); }

double SpdFactor::log_determinant() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

std::vector<double> default_jitter_schedule(const SymMatrix& a) {
  double scale = a.dim() > 0 ? a.trace() / static_cast<double>(a.dim()) : 1.0;
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
  return {0.0, 1e-12 * scale, 1e-10 * scale, 1e-8 * scale, 1e-6 * scale};
}

namespace {

bool factor_is_usable(const Eigen::LLT<Matrix>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const auto diag = llt.matrixLLT().diagonal();
  return diag.allFinite() && (diag.array() > 0.0).all();
}

}  // namespace

SpdFactor spd_factor(const SymMatrix& a, std::span<const double> jitter_schedule) {
  require(!jitter_schedule.empty(), ErrorCode::kInvalidArgument, "jitter schedule is empty");
  for (std::size_t i = 0; i < jitter_schedule.size(); ++i) {
    require(jitter_schedule[i] >= 0.0, ErrorCode::kInvalidArgument, "jitter values must be non-negative");
    require(i == 0 || jitter_schedule[i] >= jitter_schedule[i - 1], ErrorCode::kInvalidArgument,
            "jitter schedule must be ascending");
  }
  const Index n = a.dim();
  Eigen::LLT<Matrix> llt(n);
  for (double jitter : jitter_schedule) {
    if (jitter > 0.0) {
      llt.compute(a.matrix() + jitter * Matrix::Identity(n, n));
    } else {
      llt.compute(a.matrix());
    }
    if (factor_is_usable(llt)) return SpdFactor(std::move(llt), jitter);
  }
  raise(ErrorCode::kAllJittersFailed,
        "no jitter in the schedule made a " + std::to_string(a.dim()) + "x" + std::to_string(a.dim()) +
            " matrix positive definite (largest tried " + std::to_string(jitter_schedule.back()) + ")");
}

SpdFactor spd_factor(const SymMatrix& a) {
  const auto schedule = default_jitter_schedule(a);
  return spd_factor(a, schedule);
}

Vector spd_solve(const SpdFactor& f, const Vector& b) {
  require(b.size() == f.dim(), ErrorCode::kDimensionMismatch, "spd_solve: right-hand side has wrong length");
  return f.llt().solve(b);
}

Matrix spd_solve(const SpdFactor& f, const Matrix& b) {
  require(b.rows() == f.dim(), ErrorCode::kDimensionMismatch, "spd_solve: right-hand side has wrong row count");
  return f.llt().solve(b);
}

double variational_quadratic(const SymMatrix& c, double alpha, const Vector& h) {
  require(alpha > 0.0, ErrorCode::kInvalidArgument, "variational_quadratic: alpha must be positive");
  require(h.size() == c.dim(), ErrorCode::kDimensionMismatch, "variational_quadratic: h has wrong length");
  Matrix shifted = c.matrix();
  shifted.diagonal().array() += alpha;
  const SpdFactor f = spd_factor(SymMatrix(shifted));
  return h.dot(spd_solve(f, h));
}

}  // namespace vmm
