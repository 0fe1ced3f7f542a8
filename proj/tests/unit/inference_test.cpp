#include "support.hpp"
#include "vmm/inference.hpp"
#include "vmm/kernel_vmm.hpp"
#include "vmm/simulation.hpp"

using namespace vmm;

namespace {

// rho = y - (theta0 + theta1) t; the two coordinates are not separately identified.
class DuplicateShift final : public MomentProblem {
 public:
  Index residual_dim() const override { return 1; }
  Index param_dim() const override { return 2; }
  Index record_dim() const override { return 3; }
  Index instrument_dim() const override { return 1; }
  Vector residual(std::span<const double> x, const Vector& th) const override {
    return Vector::Constant(1, x[2] - (th(0) + th(1)) * x[1]);
  }
  Matrix jacobian(std::span<const double> x, const Vector&) const override { return Matrix::Constant(1, 2, -x[1]); }
  Vector instrument(std::span<const double> x) const override { return Vector::Constant(1, x[0]); }
  bool affine_in_theta() const override { return true; }
  std::string name() const override { return "duplicate_shift"; }
};

DgpSpec homoskedastic(double a, double sigma, std::uint64_t seed) {
  DgpSpec spec;
  spec.a = a;
  spec.sigma = sigma;
  spec.seed = seed;
  return spec;
}

ConditionalModel gaussian_oracle(double a, double sigma, double scale) {
  return {[a, scale](const Vector& z) { return Matrix::Constant(1, 1, -scale * a * z(0)); },
          [sigma, scale](const Vector&) { return Matrix::Constant(1, 1, scale * scale * sigma * sigma); }};
}

}  // namespace

TEST_CASE("conditional regression worked examples") {
  SplitMix64 rng(5);
  const Matrix zs = test::random_matrix(rng, 30, 2);
  const ConditionalRegressor flat = fit_conditional(zs, Matrix::Constant(30, 1, 2.5), KernelSpec::gaussian(1.0), 1e-8);
  for (int i = 0; i < 5; ++i) {
    const Vector z = test::random_vector(rng, 2);
    double mass = 0.0;
    for (Index j = 0; j < 30; ++j) {
      const Vector zj = zs.row(j).transpose();
      mass += eval_kernel(KernelSpec::gaussian(1.0), std::span<const double>(z.data(), 2), std::span<const double>(zj.data(), 2));
    }
    CHECK(std::abs(flat.predict(z)(0) - 2.5) <= 2.5 * 1e-8 / (1e-8 + mass) + 1e-15);
  }

  Matrix two(2, 1);
  two << 0.0, 1.0;
  Matrix targets(2, 1);
  targets << 3.0, -7.0;
  const ConditionalRegressor sharp = fit_conditional(two, targets, KernelSpec::gaussian(0.05), 1e-8);
  CHECK(sharp.predict(Vector::Zero(1))(0) == doctest::Approx(3.0).epsilon(1e-7));

  const ConditionalRegressor saturated = fit_conditional(two, targets, KernelSpec::gaussian(1.0), 1e300);
  CHECK(std::abs(saturated.predict(Vector::Zero(1))(0)) < 1e-290);

  CHECK_CODE(fit_conditional(Matrix::Zero(1, 1), Matrix::Zero(1, 1), KernelSpec::gaussian(1.0)),
             ErrorCode::kDegenerateData);
}

TEST_CASE("plug-in efficient information with all-ones conditionals") {
  const ProblemPtr p = linear_iv_problem(1);
  const Dataset d = test::linear_iv_data(*p, 25, Vector::Ones(1), 1.0, 2);
  const ConditionalModel ones{[](const Vector&) { return Matrix::Ones(1, 1); },
                              [](const Vector&) { return Matrix::Ones(1, 1); }};
  CHECK(omega0_plug_in(ones, d)(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("plug-in efficient information with oracle conditionals approaches the Gaussian value") {
  const double a = 1.5;
  const double sigma = 2.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const DgpSpec spec = homoskedastic(a, sigma, seed);
    const Dataset d = sample_dgp(spec, 4000);
    const double omega = omega0_plug_in(gaussian_oracle(a, sigma, 1.0), d)(0, 0);
    CHECK(test::strict_rel(omega, a * a / (sigma * sigma)) <= 0.10);
    for (double c : {2.0, 0.5, 8.0}) CHECK(omega0_plug_in(gaussian_oracle(a, sigma, c), d)(0, 0) == omega);
  }
}

TEST_CASE("plug-in efficient information from Nadaraya-Watson estimates") {
  const DgpSpec spec = homoskedastic(1.0, 1.0, 11);
  const Dataset d = sample_dgp(spec, 1500);
  const SymMatrix omega = omega0_plug_in(*dgp_problem(spec), d, dgp_true_theta(spec));
  CHECK(omega(0, 0) > 0.0);
  CHECK(omega(0, 0) < 1.1);
}

TEST_CASE("sandwich collapses to the inverse information when the prior equals the estimate") {
  const DgpSpec spec = homoskedastic(1.0, 1.0, 21);
  const ProblemPtr p = dgp_problem(spec);
  const Dataset d = sample_dgp(spec, 1000);
  const std::vector<KernelSpec> k{default_kernel(d)};
  VmmConfig cfg;
  const Vector theta_hat = k_step_estimate(*p, d, k, 2, Vector::Zero(1), cfg).theta;
  const GramAssembly a = assemble(*p, d, k, theta_hat, cfg.alpha(d.size()));
  const InferenceReport r = sandwich_covariance(a, *p, d, theta_hat, theta_hat);
  CHECK(r.efficient);
  CHECK(r.warnings.empty());
  CHECK((r.delta.matrix() - r.omega.matrix()).norm() <= 0.05 * r.omega.matrix().norm());

  const VmmSolution two = k_step_estimate(*p, d, k, 2, Vector::Zero(1), cfg);
  const InferenceReport staged = sandwich_covariance(*two.assembly, *p, d, two.theta, two.stage_thetas[0]);
  CHECK(!staged.efficient);
  CHECK((staged.delta.matrix() - staged.omega.matrix()).norm() <= 0.05 * staged.omega.matrix().norm());
  CHECK(r.covariance(0, 0) == doctest::Approx(r.asymptotic_covariance(0, 0) / 1000.0).epsilon(1e-14));
  CHECK(r.standard_errors(0) > 0.0);
  CHECK(r.intervals[0].contains(theta_hat(0)));
}

TEST_CASE("sandwich covariance matches the efficient variance on average") {
  const DgpSpec spec = homoskedastic(1.0, 1.0, 33);
  const ProblemPtr p = dgp_problem(spec);
  EstimatorConfig cfg;
  double total = 0.0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    const Dataset d = sample_dgp(spec, 1000, derive_seed(spec.seed, static_cast<std::uint64_t>(r)));
    const EstimatorOutput out = run_estimator(cfg, *p, d);
    REQUIRE(out.inference.has_value());
    total += out.inference->covariance(0, 0);
  }
  CHECK(test::strict_rel(total / reps, 1.0 / 1000.0) <= 0.20);
}

TEST_CASE("efficient variance estimates do not exceed one-step estimates from a bad prior") {
  DgpSpec spec;
  spec.kind = DgpKind::kLinearIvHeteroskedastic;
  spec.seed = 44;
  const ProblemPtr p = dgp_problem(spec);
  EstimatorConfig efficient;
  efficient.theta_init = Vector::Constant(1, -3.0);
  EstimatorConfig bad = efficient;
  bad.k = 1;
  double eff = 0.0;
  double ineff = 0.0;
  for (int r = 0; r < 30; ++r) {
    const Dataset d = sample_dgp(spec, 300, derive_seed(spec.seed, static_cast<std::uint64_t>(r)));
    eff += run_estimator(efficient, *p, d).inference->covariance(0, 0);
    ineff += run_estimator(bad, *p, d).inference->covariance(0, 0);
  }
  CHECK(ineff - eff >= -0.05 * eff);
}

TEST_CASE("duplicate parameters trigger the degeneracy warning") {
  const DuplicateShift p;
  const ProblemPtr lin = linear_iv_problem(1);
  const Dataset base = test::linear_iv_data(*lin, 60, Vector::Ones(1), 1.0, 9);
  const Dataset d = make_dataset(p, base.records);
  const GramAssembly a = assemble(p, d, {default_kernel(d)}, Eigen::Vector2d(0.5, 0.5), 0.1);
  const InferenceReport r = sandwich_covariance(a, p, d, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0.5, 0.5));
  CHECK(!r.warnings.empty());
  CHECK(r.omega.matrix().allFinite());
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(r.covariance.matrix());
  CHECK(eig.eigenvalues().minCoeff() >= -1e-12 * eig.eigenvalues().cwiseAbs().maxCoeff());
}

TEST_CASE("Wald intervals") {
  const Vector theta = Eigen::Vector2d(1.0, -2.0);
  const auto point = wald_intervals(theta, SymMatrix(Matrix::Zero(2, 2)));
  CHECK(point[0].lower == 1.0);
  CHECK(point[0].upper == 1.0);
  CHECK(point[1].lower == -2.0);

  const double n = 400.0;
  const auto iv = wald_intervals(theta, SymMatrix(Matrix::Identity(2, 2) / n), 0.05);
  for (Index i = 0; i < 2; ++i) {
    const auto& w = iv[static_cast<std::size_t>(i)];
    CHECK((w.upper - w.lower) / 2.0 == doctest::Approx(1.959964 / std::sqrt(n)).epsilon(1e-6));
    CHECK((w.upper + w.lower) / 2.0 == doctest::Approx(theta(i)).epsilon(1e-15));
  }
  CHECK_CODE(wald_intervals(theta, SymMatrix(Matrix::Identity(3, 3))), ErrorCode::kDimensionMismatch);
}

TEST_CASE("normal quantile") {
  CHECK(std::abs(normal_quantile(0.975) - 1.959963984540054) <= 1e-9);
  CHECK(std::abs(normal_quantile(0.5)) <= 1e-12);
  CHECK(std::abs(normal_quantile(0.001) + 3.090232306167813) <= 1e-9);
  CHECK(std::abs(normal_quantile(0.2) + normal_quantile(0.8)) <= 1e-12);
}
