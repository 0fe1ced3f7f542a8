#include "support.hpp"
#include "vmm/moments.hpp"

using namespace vmm;

namespace {

std::vector<double> rec(std::initializer_list<double> xs) { return xs; }

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Two-state policies as probabilities of action 1.
PolicyFn policy(double p0, double p1) {
  return [p0, p1](double a, std::span<const double> s) {
    const double p = s[0] < 0.5 ? p0 : p1;
    return a > 0.5 ? p : 1.0 - p;
  };
}

FeatureFn one_hot() {
  return [](std::span<const double> s) {
    Vector phi = Vector::Zero(2);
    phi(s[0] < 0.5 ? 0 : 1) = 1.0;
    return phi;
  };
}

void check_jacobian(const MomentProblem& p, SplitMix64& rng, const std::function<std::vector<double>()>& draw) {
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<double> x = draw();
    const Vector theta = test::random_vector(rng, p.param_dim());
    const Matrix jac = p.jacobian(x, theta);
    for (Index k = 0; k < p.residual_dim(); ++k) {
      const Vector fd = test::central_difference([&](const Vector& th) { return p.residual(x, th)(k); }, theta, 1e-5);
      const Vector an = jac.row(k).transpose();
      CHECK((fd - an).norm() <= 1e-4 * std::max(1.0, an.norm()));
    }
  }
}

}  // namespace

TEST_CASE("linear IV residual worked examples") {
  const ProblemPtr p = linear_iv_problem(1);
  // record [z, t, y]
  CHECK(p->residual(rec({0.3, 1.0, 5.0}), Vector::Constant(1, 2.0))(0) == 3.0);
  CHECK(p->residual(rec({0.3, 1.7, 5.0}), Vector::Zero(1))(0) == 5.0);
  CHECK(p->jacobian(rec({0.3, 1.5, 5.0}), Vector::Constant(1, 9.0))(0, 0) == -1.5);
  CHECK(p->instrument(rec({0.3, 1.5, 5.0}))(0) == 0.3);
  CHECK(p->affine_in_theta());
}

TEST_CASE("linear IV respects a custom column layout") {
  IvLayout layout;
  layout.y = 0;
  layout.t = {2, 3};
  layout.z = {1};
  const ProblemPtr p = linear_iv_problem(layout);
  CHECK(p->param_dim() == 2);
  CHECK(p->record_dim() == 4);
  CHECK(p->residual(rec({10.0, 0.1, 1.0, 2.0}), Eigen::Vector2d(1.0, 3.0))(0) == 3.0);
  CHECK(p->instrument(rec({10.0, 0.1, 1.0, 2.0}))(0) == 0.1);
}

TEST_CASE("malformed records and parameters are rejected") {
  const ProblemPtr p = linear_iv_problem(1);
  CHECK_CODE(p->residual(rec({1.0, 2.0}), Vector::Zero(1)), ErrorCode::kMalformedRecord);
  CHECK_CODE(p->residual(rec({1.0, 2.0, 3.0}), Vector::Zero(2)), ErrorCode::kDimensionMismatch);
  CHECK_CODE(linear_iv_problem(0), ErrorCode::kInvalidArgument);
}

TEST_CASE("quantile IV residual worked examples") {
  const ProblemPtr half = quantile_iv_problem(0.5, SmoothingConfig{0.1}, IvLayout::contiguous(1, 1));
  CHECK(half->residual(rec({0.0, 2.0, 3.0}), Vector::Constant(1, 1.5))(0) == 0.0);
  const ProblemPtr quarter = quantile_iv_problem(0.25, SmoothingConfig{0.1}, IvLayout::contiguous(1, 1));
  CHECK(quarter->residual(rec({0.0, 1.0, -1e6}), Vector::Constant(1, 1.0))(0) == doctest::Approx(0.75).epsilon(1e-12));
  // g - y = 0.1 with tau = 0.1
  CHECK(half->residual(rec({0.0, 1.0, 0.9}), Vector::Constant(1, 1.0))(0) ==
        doctest::Approx(logistic(1.0) - 0.5).epsilon(1e-12));
  CHECK(logistic(1.0) - 0.5 == doctest::Approx(0.2310586).epsilon(1e-7));
}

TEST_CASE("quantile IV rejects invalid settings") {
  CHECK_CODE(quantile_iv_problem(1.0, SmoothingConfig{0.1}, IvLayout::contiguous(1, 1)), ErrorCode::kInvalidArgument);
  CHECK_CODE(quantile_iv_problem(0.5, SmoothingConfig{0.0}, IvLayout::contiguous(1, 1)), ErrorCode::kInvalidArgument);
}

TEST_CASE("default smoothing is five percent of the outcome standard deviation") {
  const Vector y = Eigen::Vector4d(1.0, 2.0, 3.0, 4.0);
  const double sd = std::sqrt(5.0 / 3.0);
  CHECK(default_smoothing(y).temperature == doctest::Approx(0.05 * sd).epsilon(1e-14));
  CHECK_CODE(default_smoothing(Vector::Ones(3)), ErrorCode::kDegenerateData);
}

TEST_CASE("density ratio residual worked examples") {
  // record [s, a, s']
  const ProblemPtr same = density_ratio_problem(policy(0.3, 0.6), policy(0.3, 0.6), one_hot(), 2, 1);
  CHECK(same->residual(rec({0.0, 1.0, 1.0}), Eigen::Vector2d(1.0, 1.0))(0) == 0.0);
  CHECK(same->residual(rec({1.0, 0.0, 0.0}), Eigen::Vector2d::Zero())(0) == 0.0);
  CHECK(same->instrument(rec({1.0, 0.0, 0.0}))(0) == 0.0);

  // pi_e(1|0) / pi_b(1|0) = 0.8 / 0.4 = 2 with d = 1 everywhere
  const ProblemPtr ratio2 = density_ratio_problem(policy(0.8, 0.5), policy(0.4, 0.5), one_hot(), 2, 1);
  CHECK(ratio2->residual(rec({0.0, 1.0, 1.0}), Eigen::Vector2d(1.0, 1.0))(0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("density ratio rejects zero behavior probability") {
  const ProblemPtr p = density_ratio_problem(policy(0.5, 0.5), policy(0.0, 0.5), one_hot(), 2, 1);
  CHECK_CODE(p->residual(rec({0.0, 1.0, 0.0}), Eigen::Vector2d(1.0, 1.0)), ErrorCode::kZeroBehaviorProbability);
}

TEST_CASE("pinning a coordinate and normalizing the density ratio") {
  const ProblemPtr base = density_ratio_problem(policy(0.8, 0.5), policy(0.4, 0.5), one_hot(), 2, 1);
  const ProblemPtr pinned = pin_coordinate(base, 0, 1.0);
  CHECK(pinned->param_dim() == 1);
  const std::vector<double> x = rec({0.0, 1.0, 1.0});
  CHECK(pinned->residual(x, Vector::Constant(1, 3.0))(0) == base->residual(x, Eigen::Vector2d(1.0, 3.0))(0));
  CHECK(pinned->jacobian(x, Vector::Constant(1, 3.0))(0, 0) == base->jacobian(x, Eigen::Vector2d(1.0, 3.0))(0, 1));
  CHECK(expand_pinned(Eigen::Vector2d(5.0, 6.0), 1, 9.0) == Eigen::Vector3d(5.0, 9.0, 6.0));

  RecordMatrix r(4, 3);
  r << 0, 1, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0;
  const Dataset d = make_dataset(*base, r);
  const Vector theta = normalize_density_ratio(Eigen::Vector2d(2.0, 4.0), one_hot(), d, 1);
  // states 0, 1, 1, 1: mean of d = (2 + 3 * 4) / 4 = 3.5
  CHECK(theta(0) == doctest::Approx(2.0 / 3.5).epsilon(1e-15));
  CHECK(theta(1) == doctest::Approx(4.0 / 3.5).epsilon(1e-15));
}

TEST_CASE("residual_matrix worked examples") {
  const ProblemPtr p = linear_iv_problem(1);
  RecordMatrix exact(3, 3);
  exact << 0.1, 1.0, 2.0, 0.2, -1.0, -2.0, 0.3, 0.5, 1.0;
  const Dataset d = make_dataset(*p, exact);
  CHECK(residual_matrix(*p, d, Vector::Constant(1, 2.0)).isZero(0.0));

  RecordMatrix two(2, 3);
  two << 0.0, 1.0, 3.0, 0.0, 2.0, 1.0;
  const Matrix r = residual_matrix(*p, make_dataset(*p, two), Vector::Constant(1, 1.5));
  REQUIRE(r.rows() == 2);
  REQUIRE(r.cols() == 1);
  CHECK(r(0, 0) == 1.5);
  CHECK(r(1, 0) == -2.0);

  const Dataset one = make_dataset(*p, two.topRows(1));
  CHECK(residual_matrix(*p, one, Vector::Constant(1, 0.7))(0, 0) == p->residual(one.record(0), Vector::Constant(1, 0.7))(0));
}

TEST_CASE("stacked_jacobian is output-dimension major") {
  const ProblemPtr p = linear_iv_problem(2);
  RecordMatrix r(2, 5);
  r << 0, 0, 1, 2, 3, 0, 0, 4, 5, 6;
  const Matrix j = stacked_jacobian(*p, make_dataset(*p, r), Eigen::Vector2d(1.0, 1.0));
  CHECK(j.row(0) == Eigen::RowVector2d(-1.0, -2.0));
  CHECK(j.row(1) == Eigen::RowVector2d(-4.0, -5.0));
}

TEST_CASE("analytic Jacobians match central differences") {
  SplitMix64 rng(99);
  const ProblemPtr lin = linear_iv_problem(3);
  check_jacobian(*lin, rng, [&] {
    std::vector<double> x(7);
    for (double& v : x) v = rng.normal();
    return x;
  });
  const ProblemPtr q = quantile_iv_problem(0.3, SmoothingConfig{0.5}, IvLayout::contiguous(1, 2));
  check_jacobian(*q, rng, [&] {
    std::vector<double> x(4);
    for (double& v : x) v = rng.normal();
    return x;
  });
  const ProblemPtr dr = density_ratio_problem(policy(0.8, 0.3), policy(0.5, 0.6), one_hot(), 2, 1);
  check_jacobian(*dr, rng, [&] {
    return std::vector<double>{rng.bernoulli(0.5) ? 1.0 : 0.0, rng.bernoulli(0.5) ? 1.0 : 0.0,
                               rng.bernoulli(0.5) ? 1.0 : 0.0};
  });
}

TEST_CASE("residual_matrix is deterministic") {
  const ProblemPtr p = quantile_iv_problem(0.5, SmoothingConfig{0.2}, IvLayout::contiguous(1, 1));
  const Dataset d = test::linear_iv_data(*p, 50, Vector::Constant(1, 1.0), 1.0, 8);
  const Matrix a = residual_matrix(*p, d, Vector::Constant(1, 0.3));
  const Matrix b = residual_matrix(*p, d, Vector::Constant(1, 0.3));
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
}

TEST_CASE("make_dataset projects instruments") {
  const ProblemPtr p = linear_iv_problem(1);
  RecordMatrix r(2, 3);
  r << 0.5, 1, 2, -0.5, 3, 4;
  const Dataset d = make_dataset(*p, r);
  CHECK(d.size() == 2);
  CHECK(d.instruments(1, 0) == -0.5);
  CHECK_CODE(make_dataset(*p, RecordMatrix(0, 3)), ErrorCode::kDegenerateData);
}
