#include <Eigen/Eigenvalues>

#include "support.hpp"
#include "vmm/kernels.hpp"

using namespace vmm;

namespace {

double eval(const KernelSpec& s, std::vector<double> a, std::vector<double> b) { return eval_kernel(s, a, b); }

Matrix column(std::initializer_list<double> xs) {
  Matrix m(static_cast<Index>(xs.size()), 1);
  Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST_CASE("eval_kernel worked examples") {
  CHECK(eval(KernelSpec::gaussian(1.0), {0.0}, {0.0}) == 1.0);
  CHECK(eval(KernelSpec::gaussian(1.0), {0.0}, {1.0}) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(eval(KernelSpec::linear(), {1.0, 2.0}, {3.0, 4.0}) == 11.0);
  CHECK(eval(KernelSpec::polynomial(3, 1.0), {1.0, 2.0}, {3.0, 4.0}) == 1728.0);
  CHECK(eval(KernelSpec::gaussian(2.0), {1.0, 1.0}, {-1.0, 1.0}) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
}

TEST_CASE("eval_kernel rejects mismatched dimensions and invalid specs") {
  CHECK_CODE(eval(KernelSpec::gaussian(1.0), {0.0}, {0.0, 1.0}), ErrorCode::kDimensionMismatch);
  CHECK_CODE(KernelSpec::gaussian(0.0).validate(), ErrorCode::kInvalidArgument);
  CHECK_CODE(KernelSpec::polynomial(0, 1.0).validate(), ErrorCode::kInvalidArgument);
  CHECK(kernel_kind_from_string("polynomial") == KernelKind::kPolynomial);
  CHECK_CODE(kernel_kind_from_string("matern"), ErrorCode::kInvalidArgument);
}

TEST_CASE("eval_kernel is exactly symmetric") {
  SplitMix64 rng(3);
  const KernelSpec specs[] = {KernelSpec::gaussian(0.7), KernelSpec::linear(), KernelSpec::polynomial(3, 0.5)};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(3), b(3);
    for (int d = 0; d < 3; ++d) {
      a[static_cast<std::size_t>(d)] = rng.normal();
      b[static_cast<std::size_t>(d)] = rng.normal();
    }
    for (const KernelSpec& s : specs) CHECK(eval_kernel(s, a, b) == eval_kernel(s, b, a));
  }
}

TEST_CASE("gram_matrix worked examples") {
  const Matrix g = gram_matrix(KernelSpec::gaussian(1.0), column({0.0, 1.0})).matrix();
  CHECK(g(0, 0) == 1.0);
  CHECK(g(1, 1) == 1.0);
  CHECK(g(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(g(1, 0) == g(0, 1));

  CHECK(gram_matrix(KernelSpec::gaussian(0.3), column({5.0})).matrix()(0, 0) == 1.0);

  const Matrix lin = gram_matrix(KernelSpec::linear(), column({1.0, 2.0})).matrix();
  CHECK(lin(0, 0) == 1.0);
  CHECK(lin(0, 1) == 2.0);
  CHECK(lin(1, 0) == 2.0);
  CHECK(lin(1, 1) == 4.0);
}

TEST_CASE("gaussian Gram matrices are PSD with a unit diagonal") {
  SplitMix64 rng(17);
  for (Index n : {2, 30, 120, 300}) {
    const Matrix pts = test::random_matrix(rng, n, 2);
    const GramMatrix g = gram_matrix(KernelSpec::gaussian(0.5 + rng.uniform()), pts);
    CHECK((g.matrix().diagonal().array() == 1.0).all());
    Eigen::SelfAdjointEigenSolver<Matrix> es(g.matrix(), Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("cross_gram agrees with eval_kernel") {
  SplitMix64 rng(4);
  const Matrix a = test::random_matrix(rng, 4, 2);
  const Matrix b = test::random_matrix(rng, 3, 2);
  const KernelSpec s = KernelSpec::gaussian(0.8);
  const Matrix c = cross_gram(s, a, b);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 3; ++j) {
      const Vector x = a.row(i).transpose();
      const Vector y = b.row(j).transpose();
      CHECK(c(i, j) == eval_kernel(s, {x.data(), 2}, {y.data(), 2}));
    }
  }
}

TEST_CASE("median_bandwidth worked examples") {
  CHECK(median_bandwidth(column({0.0, 1.0, 3.0})) == 2.0);
  CHECK(median_bandwidth(column({0.0, 2.0})) == 2.0);
  CHECK(median_bandwidth(column({0.0, 0.0, 1.0})) == 1.0);
  // even count of distances: mean of the middle pair {1, 2, 3, 1, 2, 1} -> 1.5
  CHECK(median_bandwidth(column({0.0, 1.0, 2.0, 3.0})) == 1.5);
}

TEST_CASE("median_bandwidth rejects degenerate point sets") {
  CHECK_CODE(median_bandwidth(column({1.0, 1.0, 1.0})), ErrorCode::kDegenerateData);
  CHECK_CODE(median_bandwidth(column({1.0})), ErrorCode::kDegenerateData);
}
