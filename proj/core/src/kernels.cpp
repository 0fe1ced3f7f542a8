#include "vmm/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "vmm/errors.hpp"

namespace vmm {

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::kGaussian: return "gaussian";
    case KernelKind::kLinear: return "linear";
    case KernelKind::kPolynomial: return "polynomial";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "gaussian") return KernelKind::kGaussian;
  if (name == "linear") return KernelKind::kLinear;
  if (name == "polynomial") return KernelKind::kPolynomial;
  raise(ErrorCode::kInvalidArgument, "unknown kernel kind '" + name + "'");
}

void KernelSpec::validate() const {
  if (kind == KernelKind::kGaussian) {
    require(bandwidth > 0.0 && std::isfinite(bandwidth), ErrorCode::kInvalidArgument,
            "gaussian kernel bandwidth must be positive");
  }
  if (kind == KernelKind::kPolynomial) {
    require(degree >= 1, ErrorCode::kInvalidArgument, "polynomial kernel degree must be >= 1");
  }
}

namespace {

// Symmetric in (a, b) bit-for-bit: both the squared difference and the
// product commute termwise and are summed in index order.
inline double kernel_value(const KernelSpec& spec, const double* a, const double* b, Index stride_a,
                           Index stride_b, Index dim) {
  switch (spec.kind) {
    case KernelKind::kGaussian: {
      double sq = 0.0;
      for (Index d = 0; d < dim; ++d) {
        const double diff = a[d * stride_a] - b[d * stride_b];
        sq += diff * diff;
      }
      return std::exp(-sq / (2.0 * spec.bandwidth * spec.bandwidth));
    }
    case KernelKind::kLinear: {
      double dot = 0.0;
      for (Index d = 0; d < dim; ++d) dot += a[d * stride_a] * b[d * stride_b];
      return dot;
    }
    case KernelKind::kPolynomial: {
      double dot = 0.0;
      for (Index d = 0; d < dim; ++d) dot += a[d * stride_a] * b[d * stride_b];
      return std::pow(dot + spec.offset, spec.degree);
    }
  }
  return 0.0;
}

}  // namespace

double eval_kernel(const KernelSpec& spec, std::span<const double> z, std::span<const double> z2) {
  require(z.size() == z2.size(), ErrorCode::kDimensionMismatch, "eval_kernel: arguments differ in dimension");
  spec.validate();
  return kernel_value(spec, z.data(), z2.data(), 1, 1, static_cast<Index>(z.size()));
}

GramMatrix gram_matrix(const KernelSpec& spec, const Matrix& points) {
  spec.validate();
  const Index n = points.rows();
  require(n >= 1, ErrorCode::kDimensionMismatch, "gram_matrix: need at least one point");
  const Index dim = points.cols();
  const Index stride = points.outerStride();
  Matrix k(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) k(i, j) = kernel_value(spec, points.data() + i, points.data() + j, stride, stride, dim);
  }
  k.triangularView<Eigen::StrictlyUpper>() = k.transpose();
  return GramMatrix{SymMatrix(std::move(k))};
}

Matrix cross_gram(const KernelSpec& spec, const Matrix& a, const Matrix& b) {
  spec.validate();
  require(a.cols() == b.cols(), ErrorCode::kDimensionMismatch, "cross_gram: point sets differ in dimension");
  Matrix k(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      k(i, j) = kernel_value(spec, a.data() + i, b.data() + j, a.outerStride(), b.outerStride(), a.cols());
    }
  }
  return k;
}

double median_bandwidth(const Matrix& points) {
  const Index n = points.rows();
  require(n >= 2, ErrorCode::kDegenerateData, "median_bandwidth: need at least two points");
  std::vector<double> distances;
  distances.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) distances.push_back((points.row(i) - points.row(j)).norm());
  }
  const std::size_t count = distances.size();
  const std::size_t mid = count / 2;
  std::nth_element(distances.begin(), distances.begin() + static_cast<std::ptrdiff_t>(mid), distances.end());
  double median = distances[mid];
  if (count % 2 == 0) {
    const double lower = *std::max_element(distances.begin(), distances.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  if (!(median > 0.0)) {
    const double largest = *std::max_element(distances.begin(), distances.end());
    require(largest > 0.0, ErrorCode::kDegenerateData, "median_bandwidth: all points coincide");
    // More than half the pairs coincide; fall back to the median of the non-zero distances.
    std::vector<double> positive;
    for (double d : distances) {
      if (d > 0.0) positive.push_back(d);
    }
    std::sort(positive.begin(), positive.end());
    median = positive[positive.size() / 2];
  }
  return median;
}

}  // namespace vmm
