#include "support.hpp"
#include "vmm/owgmm.hpp"
#include "vmm/simulation.hpp"

using namespace vmm;

namespace {

InstrumentBasis constant_basis() {
  InstrumentBasis b;
  b.functions.push_back([](const Vector&) { return Vector::Ones(1); });
  return b;
}

// rho(x; theta) = x1 - theta with instrument x0.
class ShiftProblem final : public MomentProblem {
 public:
  Index residual_dim() const override { return 1; }
  Index param_dim() const override { return 1; }
  Index record_dim() const override { return 2; }
  Index instrument_dim() const override { return 1; }
  Vector residual(std::span<const double> x, const Vector& theta) const override {
    return Vector::Constant(1, x[1] - theta(0));
  }
  Matrix jacobian(std::span<const double>, const Vector&) const override { return Matrix::Constant(1, 1, -1.0); }
  Vector instrument(std::span<const double> x) const override { return Vector::Constant(1, x[0]); }
  bool affine_in_theta() const override { return true; }
  std::string name() const override { return "shift"; }
};

Dataset shift_data(std::initializer_list<std::pair<double, double>> rows) {
  static const ShiftProblem p;
  RecordMatrix r(static_cast<Index>(rows.size()), 2);
  Index i = 0;
  for (auto [z, y] : rows) {
    r(i, 0) = z;
    r(i, 1) = y;
    ++i;
  }
  return make_dataset(p, r);
}

}  // namespace

TEST_CASE("gamma_matrix worked examples") {
  const ShiftProblem p;
  const Dataset one = shift_data({{0.0, 2.0}});
  const SymMatrix g = gamma_matrix(constant_basis(), p, one, Vector::Zero(1));
  CHECK(g(0, 0) == 4.0);

  const Dataset d = shift_data({{0.5, 1.0}, {-0.2, 1.0}, {1.0, 1.0}});
  CHECK(gamma_matrix(InstrumentBasis::polynomial(1), p, d, Vector::Ones(1)).matrix().isZero(0.0));

  InstrumentBasis twice = InstrumentBasis::polynomial(1);
  twice.functions.push_back(twice.functions[1]);
  const Matrix g2 = gamma_matrix(twice, p, d, Vector::Zero(1)).matrix();
  CHECK(g2(1, 1) == g2(2, 2));
  CHECK(g2(1, 2) == g2(1, 1));
  CHECK(g2(0, 1) == g2(0, 2));
}

TEST_CASE("gamma_matrix rejects an instrument that vanishes on the data") {
  const ShiftProblem p;
  const Dataset d = shift_data({{0.0, 1.0}, {0.0, 2.0}});
  CHECK_CODE(gamma_matrix(InstrumentBasis::polynomial(1), p, d, Vector::Zero(1)), ErrorCode::kDegenerateInstrument);
}

TEST_CASE("owgmm_objective worked examples") {
  const ShiftProblem p;
  const Dataset d = shift_data({{0.3, 1.0}, {-0.4, 3.0}});
  // g = mean(y) - theta = 2 - theta
  CHECK(owgmm_objective(constant_basis(), p, d, Vector::Constant(1, 2.0), SymMatrix::identity(1)) == 0.0);
  // g = 3 with Gamma = 4
  CHECK(owgmm_objective(constant_basis(), p, d, Vector::Constant(1, -1.0), SymMatrix(Matrix::Constant(1, 1, 4.0))) ==
        doctest::Approx(9.0 / 4.0).epsilon(1e-15));
}

TEST_CASE("owgmm_objective is invariant to rescaling the instruments") {
  const ProblemPtr p = linear_iv_problem(1);
  const Dataset d = test::linear_iv_data(*p, 40, Vector::Ones(1), 1.0, 6);
  const InstrumentBasis base = InstrumentBasis::polynomial(2);
  InstrumentBasis scaled;
  for (const auto& f : base.functions) scaled.functions.push_back([f](const Vector& z) { return Vector(3.5 * f(z)); });
  const Vector prior = Vector::Constant(1, 0.4);
  const Vector theta = Vector::Constant(1, 0.8);
  const double a = owgmm_objective(base, *p, d, theta, gamma_matrix(base, *p, d, prior));
  const double b = owgmm_objective(scaled, *p, d, theta, gamma_matrix(scaled, *p, d, prior));
  CHECK(test::strict_rel(a, b) <= 1e-10);
  CHECK(a >= 0.0);
}

TEST_CASE("OWGMM equals the span game at its closed-form stationary point") {
  // Oracle built from scratch: F is the n x k instrument matrix, g = F^T rho / n,
  // Gamma = F^T diag(rho_prior^2) F / n, v* = 2 Gamma^{-1} g.
  SplitMix64 rng(31);
  const ProblemPtr p = linear_iv_problem(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 10 + static_cast<Index>(rng.next() % 41);
    const int degree = static_cast<int>(rng.next() % 4);
    const InstrumentBasis basis = InstrumentBasis::polynomial(degree);
    const Dataset d = test::linear_iv_data(*p, n, Vector::Ones(1), 1.0, rng.next());
    const Vector theta = Vector::Constant(1, rng.normal());
    const Vector prior = Vector::Constant(1, rng.normal());
    Matrix f(n, degree + 1);
    for (Index i = 0; i < n; ++i) {
      for (int l = 0; l <= degree; ++l) f(i, l) = std::pow(d.instruments(i, 0), l);
    }
    const Vector rho = residual_matrix(*p, d, theta).col(0);
    const Vector rho0 = residual_matrix(*p, d, prior).col(0);
    const Vector g = f.transpose() * rho / static_cast<double>(n);
    const Matrix gamma = f.transpose() * rho0.cwiseAbs2().asDiagonal() * f / static_cast<double>(n);
    const Vector v = 2.0 * gamma.ldlt().solve(g);
    const double owgmm = owgmm_objective(basis, *p, d, theta, gamma_matrix(basis, *p, d, prior));
    CHECK(test::strict_rel(owgmm, g.dot(gamma.ldlt().solve(g))) <= 1e-8);
    CHECK(test::strict_rel(owgmm, span_game_value(basis, *p, d, theta, prior, v)) <= 1e-8);
  }
}

TEST_CASE("owgmm_estimate solves exactly identified noiseless designs") {
  const ProblemPtr p = linear_iv_problem(1);
  const Dataset d = test::linear_iv_data(*p, 100, Vector::Constant(1, 1.7), 0.0, 12);
  const OwgmmEstimate est = owgmm_estimate(InstrumentBasis::polynomial(1), *p, d, Vector::Zero(1), OwgmmConfig{});
  CHECK(std::abs(est.theta(0) - 1.7) <= 1e-6);
  CHECK(est.stage_thetas.size() == 2);
  CHECK(est.objective >= 0.0);

  const ShiftProblem shift;
  const Dataset s = shift_data({{0.1, 1.0}, {0.2, 2.0}, {0.3, 4.5}});
  OwgmmConfig one;
  one.steps = 1;
  one.first_stage = FirstStageWeight::kIdentity;
  CHECK(owgmm_estimate(constant_basis(), shift, s, Vector::Zero(1), one).theta(0) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("owgmm_estimate uses restarts for nonlinear problems") {
  const ProblemPtr p = quantile_iv_problem(0.5, SmoothingConfig{0.2}, IvLayout::contiguous(1, 1));
  const Dataset d = test::linear_iv_data(*p, 200, Vector::Constant(1, 1.0), 0.5, 3);
  OwgmmConfig cfg;
  cfg.box = Box{Vector::Constant(1, -3.0), Vector::Constant(1, 3.0)};
  const OwgmmEstimate est = owgmm_estimate(InstrumentBasis::polynomial(2), *p, d, Vector::Zero(1), cfg);
  CHECK(std::abs(est.theta(0) - 1.0) < 0.3);
  CHECK(est.gradient_norm <= 1e-6);
}

TEST_CASE("owgmm_objective at the truth shrinks with n") {
  const ProblemPtr p = linear_iv_problem(1);
  const InstrumentBasis basis = InstrumentBasis::polynomial(2);
  double previous = 0.0;
  for (Index n : {100, 400, 1600}) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const Dataset d = test::linear_iv_data(*p, n, Vector::Ones(1), 1.0, 1000 * seed + static_cast<std::uint64_t>(n));
      total += owgmm_objective(basis, *p, d, Vector::Ones(1), gamma_matrix(basis, *p, d, Vector::Ones(1)));
    }
    if (n > 100) CHECK(total < previous);
    previous = total;
  }
}

TEST_CASE("two-step OWGMM is no less efficient than identity-weighted one-step") {
  DgpSpec spec;
  spec.kind = DgpKind::kLinearIvHeteroskedastic;
  spec.seed = 77;
  EstimatorConfig two;
  two.kind = EstimatorKind::kOwgmm;
  two.basis_degree = 3;
  two.intervals = false;
  EstimatorConfig one = two;
  one.owgmm.steps = 1;
  one.owgmm.first_stage = FirstStageWeight::kIdentity;
  const Comparison cmp = compare_estimators(spec, {one, two}, 400, 200, true);
  CHECK(cmp.common_reps == 200);
  CHECK(cmp.variance_ratio[1](0) < 1.05);
}
