#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "vmm/moments.hpp"
#include "vmm/kernels.hpp"
#include "vmm/rng.hpp"
#include "vmm/verify.hpp"

namespace vmm::verify::detail {

inline std::string fmt(const char* format, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), format, a, b);
  return buf;
}

inline double relative_error(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

inline Index uniform_index(SplitMix64& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(rng.next() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline double log_uniform(SplitMix64& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

// rho = (y1 - theta_0 t1 - theta_1 t2, y2 - theta_1 t2), record [z (dz), t1, t2, y1, y2].
class TwoEquationProblem final : public MomentProblem {
 public:
  explicit TwoEquationProblem(Index dz) : dz_(dz) {}
  Index residual_dim() const override { return 2; }
  Index param_dim() const override { return 2; }
  Index record_dim() const override { return dz_ + 4; }
  Index instrument_dim() const override { return dz_; }
  Vector residual(std::span<const double> x, const Vector& theta) const override {
    check_record(x);
    check_theta(theta);
    const double t1 = x[dz_], t2 = x[dz_ + 1];
    Vector r(2);
    r << x[dz_ + 2] - theta(0) * t1 - theta(1) * t2, x[dz_ + 3] - theta(1) * t2;
    return r;
  }
  Matrix jacobian(std::span<const double> x, const Vector& theta) const override {
    check_record(x);
    Matrix j(2, 2);
    j << -x[dz_], -x[dz_ + 1], 0.0, -x[dz_ + 1];
    return j;
  }
  Vector instrument(std::span<const double> x) const override {
    return Eigen::Map<const Vector>(x.data(), dz_);
  }
  bool affine_in_theta() const override { return true; }
  std::string name() const override { return "two_equation_iv"; }

 private:
  Index dz_;
};

// sqrt-factor B with B B^T = K, negative round-off eigenvalues clipped.
inline Matrix gram_root(const Matrix& k) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (k + k.transpose()));
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

inline double kernel_entry(const KernelSpec& spec, const Matrix& points, Index i, Index j) {
  const Vector a = points.row(i).transpose();
  const Vector b = points.row(j).transpose();
  return eval_kernel(spec, {a.data(), static_cast<std::size_t>(a.size())}, {b.data(), static_cast<std::size_t>(b.size())});
}

template <typename Body>
SuiteReport timed_suite(const std::string& name, std::uint64_t seed, Body body) {
  const auto start = std::chrono::steady_clock::now();
  SuiteReport report;
  report.suite = name;
  report.seed = seed;
  body(report);
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}


}  // namespace vmm::verify::detail
