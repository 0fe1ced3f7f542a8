#pragma once

#include <span>
#include <string>
#include <vector>

#include "vmm/numerics.hpp"

namespace vmm {

enum class KernelKind { kGaussian, kLinear, kPolynomial };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

struct KernelSpec {
  KernelKind kind = KernelKind::kGaussian;
  double bandwidth = 1.0;  // gaussian
  int degree = 2;          // polynomial
  double offset = 1.0;     // polynomial

  static KernelSpec gaussian(double bandwidth) { return {KernelKind::kGaussian, bandwidth, 2, 1.0}; }
  static KernelSpec linear() { return {KernelKind::kLinear, 1.0, 1, 0.0}; }
  static KernelSpec polynomial(int degree, double offset) { return {KernelKind::kPolynomial, 1.0, degree, offset}; }

  void validate() const;
};

double eval_kernel(const KernelSpec& spec, std::span<const double> z, std::span<const double> z2);

/// Gram matrix of a point set. Points are the rows of `points`.
struct GramMatrix {
  SymMatrix values;

  Index size() const { return values.dim(); }
  const Matrix& matrix() const { return values.matrix(); }
};

GramMatrix gram_matrix(const KernelSpec& spec, const Matrix& points);

/// K(a_i, b_j) for rows a_i of `a` and b_j of `b`.
Matrix cross_gram(const KernelSpec& spec, const Matrix& a, const Matrix& b);

/// Median of the n(n-1)/2 pairwise Euclidean distances between rows.
double median_bandwidth(const Matrix& points);

}  // namespace vmm
