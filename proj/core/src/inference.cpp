#include "vmm/inference.hpp"

#include <cmath>
#include <limits>

#include "vmm/errors.hpp"

namespace vmm {

ConditionalRegressor::ConditionalRegressor(KernelSpec spec, double ridge, Matrix points, Matrix targets)
    : spec_(spec), ridge_(ridge), points_(std::move(points)), targets_(std::move(targets)) {
  spec_.validate();
  require(ridge_ >= 0.0 && std::isfinite(ridge_), ErrorCode::kInvalidArgument, "ridge must be finite and non-negative");
  require(points_.rows() == targets_.rows(), ErrorCode::kDimensionMismatch, "points and targets differ in length");
  require(points_.rows() >= 2, ErrorCode::kDegenerateData, "conditional regression needs at least two points");
}

Vector ConditionalRegressor::predict(const Vector& z) const { return predict_batch(Matrix(z.transpose())).row(0).transpose(); }

Matrix ConditionalRegressor::predict_batch(const Matrix& zs) const {
  require(zs.cols() == points_.cols(), ErrorCode::kDimensionMismatch, "query points have the wrong dimension");
  Matrix weights = cross_gram(spec_, zs, points_);
  const Vector denom = weights.rowwise().sum().array() + ridge_;
  for (Index i = 0; i < weights.rows(); ++i) {
    if (denom(i) > 0.0) {
      weights.row(i) /= denom(i);
    } else {
      weights.row(i).setZero();
    }
  }
  return weights * targets_;
}

ConditionalRegressor fit_conditional(const Matrix& zs, const Matrix& targets, const KernelSpec& spec, double ridge) {
  return ConditionalRegressor(spec, ridge, zs, targets);
}

namespace {

Matrix floored_inverse(const Matrix& v, double floor_scale) {
  const Index m = v.rows();
  const double tr = v.trace();
  if (!(tr > 0.0) || !std::isfinite(tr)) raise(ErrorCode::kSingularV, "conditional second moment has no positive mass");
  const double floor = floor_scale * tr / static_cast<double>(m);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (v + v.transpose()));
  Vector values = eig.eigenvalues().cwiseMax(floor);
  if (values.minCoeff() < floor) raise(ErrorCode::kSingularV, "eigenvalue floor failed");
  return eig.eigenvectors() * values.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

SymMatrix omega0_plug_in(const ConditionalModel& model, const Dataset& data, const RegressionConfig& config) {
  const Index n = data.size();
  require(n >= 1, ErrorCode::kDegenerateData, "empty dataset");
  Matrix total;
  for (Index i = 0; i < n; ++i) {
    const Vector z = data.instruments.row(i).transpose();
    const Matrix g = model.jacobian_mean(z);
    const Matrix v = model.second_moment(z);
    require(v.rows() == g.rows() && v.cols() == g.rows(), ErrorCode::kDimensionMismatch,
            "conditional model dimensions disagree");
    const Matrix term = g.transpose() * floored_inverse(v, config.eigenvalue_floor) * g;
    if (i == 0) {
      total = term;
    } else {
      total += term;
    }
  }
  return SymMatrix(total / static_cast<double>(n));
}

SymMatrix omega0_plug_in(const MomentProblem& problem, const Dataset& data, const Vector& theta_hat,
                         const RegressionConfig& config) {
  const Index n = data.size();
  const Index m = problem.residual_dim();
  const Index b = problem.param_dim();
  require(n >= 2, ErrorCode::kDegenerateData, "plug-in needs at least two observations");
  const KernelSpec spec = config.kernel ? *config.kernel : KernelSpec::gaussian(median_bandwidth(data.instruments));

  Matrix targets(n, m * b + m * m);
  for (Index i = 0; i < n; ++i) {
    const Matrix jac = problem.jacobian(data.record(i), theta_hat);
    const Vector r = problem.residual(data.record(i), theta_hat);
    const Matrix outer = r * r.transpose();
    targets.row(i).head(m * b) = Eigen::Map<const Vector>(jac.data(), m * b).transpose();
    targets.row(i).tail(m * m) = Eigen::Map<const Vector>(outer.data(), m * m).transpose();
  }
  const Matrix fitted = fit_conditional(data.instruments, targets, spec, config.ridge).predict_batch(data.instruments);

  Matrix total = Matrix::Zero(b, b);
  for (Index i = 0; i < n; ++i) {
    const Vector row = fitted.row(i).transpose();
    const Matrix g = Eigen::Map<const Matrix>(row.data(), m, b);
    const Matrix v = Eigen::Map<const Matrix>(row.data() + m * b, m, m);
    total += g.transpose() * floored_inverse(v, config.eigenvalue_floor) * g;
  }
  return SymMatrix(total / static_cast<double>(n));
}

InferenceReport sandwich_covariance(const GramAssembly& assembly, const MomentProblem& problem, const Dataset& data,
                                    const Vector& theta_hat, const Vector& theta_prior, double level) {
  const Index n = data.size();
  const Index m = problem.residual_dim();
  const Index b = problem.param_dim();
  require(assembly.n() == n && assembly.m() == m, ErrorCode::kDimensionMismatch, "assembly does not match the data");
  require(level > 0.0 && level < 1.0, ErrorCode::kInvalidArgument, "level must lie in (0, 1)");
  const double nd = static_cast<double>(n);

  const Matrix jac = stacked_jacobian(problem, data, theta_hat);
  const Matrix weighted = assembly.apply_weight(jac);
  const Matrix residuals = residual_matrix(problem, data, theta_hat);

  const Matrix& prior_residuals = assembly.prior_residuals();
  Matrix scores = Matrix::Zero(n, b);
  Matrix prior_scores = Matrix::Zero(n, b);
  for (Index k = 0; k < m; ++k) {
    scores += residuals.col(k).asDiagonal() * weighted.middleRows(k * n, n);
    prior_scores += prior_residuals.col(k).asDiagonal() * weighted.middleRows(k * n, n);
  }

  InferenceReport report;
  report.n = n;
  report.theta = theta_hat;
  report.level = level;
  report.omega = SymMatrix(jac.transpose() * weighted / (nd * nd));
  // Middle factor Q(theta_hat) + alpha L, using M (Q(prior) + alpha L) = I.
  report.delta = SymMatrix(report.omega.matrix() +
                           (scores.transpose() * scores - prior_scores.transpose() * prior_scores) / (nd * nd * nd));

  const double scale = std::max(1.0, theta_hat.norm());
  report.efficient = theta_prior.size() == theta_hat.size() && (theta_prior - theta_hat).norm() <= 1e-8 * scale;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(report.omega.matrix());
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  const double bottom = eig.eigenvalues().minCoeff();
  const SpdFactor factor = spd_factor(report.omega);
  report.jitter_used = factor.jitter_used();
  if (report.jitter_used > 0.0 || !(top > 0.0) || bottom <= 1e-12 * top) {
    report.warnings.push_back("Omega-hat is numerically singular; parameters may not be identified");
  }
  const Matrix omega_inv_delta = spd_solve(factor, report.delta.matrix());
  const Matrix sandwich = spd_solve(factor, Matrix(omega_inv_delta.transpose()));
  report.asymptotic_covariance = SymMatrix(sandwich);
  report.covariance = SymMatrix(sandwich / nd);
  report.standard_errors = report.covariance.matrix().diagonal().cwiseMax(0.0).cwiseSqrt();
  report.intervals = wald_intervals(theta_hat, report.covariance, level);
  return report;
}

std::vector<Interval> wald_intervals(const Vector& theta, const SymMatrix& covariance, double level) {
  require(covariance.dim() == theta.size(), ErrorCode::kDimensionMismatch, "covariance does not match theta");
  require(level > 0.0 && level < 1.0, ErrorCode::kInvalidArgument, "level must lie in (0, 1)");
  const double z = normal_quantile(1.0 - level / 2.0);
  std::vector<Interval> out;
  out.reserve(static_cast<std::size_t>(theta.size()));
  for (Index i = 0; i < theta.size(); ++i) {
    const double half = z * std::sqrt(std::max(0.0, covariance(i, i)));
    out.push_back({theta(i) - half, theta(i) + half});
  }
  return out;
}

double normal_quantile(double p) {
  require(p >= 0.0 && p <= 1.0, ErrorCode::kInvalidArgument, "probability must lie in [0, 1]");
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace vmm
