#include "vmm/owgmm.hpp"

#include <cmath>
#include <string>

#include "vmm/errors.hpp"

namespace vmm {

InstrumentBasis InstrumentBasis::polynomial(int degree) {
  require(degree >= 0, ErrorCode::kInvalidArgument, "polynomial basis degree must be non-negative");
  InstrumentBasis basis;
  for (int p = 0; p <= degree; ++p) {
    basis.functions.push_back([p](const Vector& z) { return Vector::Constant(1, std::pow(z(0), p)); });
  }
  return basis;
}

InstrumentBasis InstrumentBasis::affine(Index instrument_dim) {
  InstrumentBasis basis;
  basis.functions.push_back([](const Vector&) { return Vector::Ones(1); });
  for (Index d = 0; d < instrument_dim; ++d) {
    basis.functions.push_back([d](const Vector& z) { return Vector::Constant(1, z(d)); });
  }
  return basis;
}

Matrix evaluate_instruments(const InstrumentBasis& basis, const Dataset& data) {
  require(basis.size() >= 1, ErrorCode::kInvalidArgument, "instrument basis is empty");
  const Index n = data.size();
  const Index m = basis.output_dim;
  Matrix out(n * m, basis.size());
  for (Index i = 0; i < n; ++i) {
    const Vector z = data.instruments.row(i).transpose();
    for (Index l = 0; l < basis.size(); ++l) {
      const Vector value = basis.functions[static_cast<std::size_t>(l)](z);
      require(value.size() == m, ErrorCode::kDimensionMismatch, "instrument function returned the wrong dimension");
      for (Index k = 0; k < m; ++k) out(k * n + i, l) = value(k);
    }
  }
  return out;
}

namespace {

void check_output_dim(const InstrumentBasis& basis, const MomentProblem& problem) {
  require(basis.output_dim == problem.residual_dim(), ErrorCode::kDimensionMismatch,
          "instrument output dimension differs from the residual dimension");
}

// Per-observation contributions u_{i,l} = f_l(Z_i)^T rho(X_i).
Matrix moment_contributions(const Matrix& instruments, const Vector& flat_residuals, Index n, Index m) {
  Matrix u = Matrix::Zero(n, instruments.cols());
  for (Index k = 0; k < m; ++k) {
    u += (instruments.middleRows(k * n, n).array().colwise() * flat_residuals.segment(k * n, n).array()).matrix();
  }
  return u;
}

struct MomentModel {
  const InstrumentBasis& basis;
  const MomentProblem& problem;
  const Dataset& data;
  Matrix instruments;

  MomentModel(const InstrumentBasis& b, const MomentProblem& p, const Dataset& d)
      : basis(b), problem(p), data(d), instruments(evaluate_instruments(b, d)) {}

  double n() const { return static_cast<double>(data.size()); }

  Vector moments(const Vector& theta) const {
    return instruments.transpose() * flatten_residuals(residual_matrix(problem, data, theta)) / n();
  }

  Matrix moment_jacobian(const Vector& theta) const {
    return instruments.transpose() * stacked_jacobian(problem, data, theta) / n();
  }
};

}  // namespace

Vector empirical_moments(const InstrumentBasis& basis, const MomentProblem& problem, const Dataset& data,
                         const Vector& theta) {
  check_output_dim(basis, problem);
  return MomentModel(basis, problem, data).moments(theta);
}

SymMatrix gamma_matrix(const InstrumentBasis& basis, const MomentProblem& problem, const Dataset& data,
                       const Vector& theta_prior) {
  check_output_dim(basis, problem);
  const Matrix instruments = evaluate_instruments(basis, data);
  for (Index l = 0; l < instruments.cols(); ++l) {
    if (instruments.col(l).cwiseAbs().maxCoeff() == 0.0) {
      raise(ErrorCode::kDegenerateInstrument, "instrument " + std::to_string(l) + " is identically zero on the data");
    }
  }
  const Index n = data.size();
  const Vector prior = flatten_residuals(residual_matrix(problem, data, theta_prior));
  const Matrix u = moment_contributions(instruments, prior, n, problem.residual_dim());
  return SymMatrix(u.transpose() * u / static_cast<double>(n));
}

double owgmm_objective(const InstrumentBasis& basis, const MomentProblem& problem, const Dataset& data,
                       const Vector& theta, const SymMatrix& gamma) {
  const Vector g = empirical_moments(basis, problem, data, theta);
  require(gamma.dim() == g.size(), ErrorCode::kDimensionMismatch, "Gamma dimension differs from the basis size");
  return g.dot(spd_solve(spd_factor(gamma), g));
}

double span_game_value(const InstrumentBasis& basis, const MomentProblem& problem, const Dataset& data,
                       const Vector& theta, const Vector& theta_prior, const Vector& v) {
  check_output_dim(basis, problem);
  require(v.size() == basis.size(), ErrorCode::kDimensionMismatch, "span coefficients differ from the basis size");
  const Index n = data.size();
  double linear = 0.0;
  double quadratic = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Vector z = data.instruments.row(i).transpose();
    Vector f = Vector::Zero(basis.output_dim);
    for (Index l = 0; l < basis.size(); ++l) f += v(l) * basis.functions[static_cast<std::size_t>(l)](z);
    linear += f.dot(problem.residual(data.record(i), theta));
    const double weighted = f.dot(problem.residual(data.record(i), theta_prior));
    quadratic += weighted * weighted;
  }
  return linear / static_cast<double>(n) - 0.25 * quadratic / static_cast<double>(n);
}

namespace {

OptimizerResult minimize_weighted(const MomentModel& model, const SpdFactor& weight, const Vector& start,
                                  const OwgmmConfig& config) {
  const Objective objective = [&](const Vector& theta, Vector* grad) {
    const Vector g = model.moments(theta);
    const Vector wg = spd_solve(weight, g);
    if (grad != nullptr) *grad = 2.0 * model.moment_jacobian(theta).transpose() * wg;
    return g.dot(wg);
  };

  if (model.problem.affine_in_theta()) {
    const Vector g0 = model.moments(start);
    const Matrix h = model.moment_jacobian(start);
    const Matrix wh = spd_solve(weight, h);
    const SpdFactor normal = spd_factor(SymMatrix(h.transpose() * wh));
    Vector theta = start - spd_solve(normal, Vector(wh.transpose() * g0));
    if (!config.box || config.box->contains(theta)) {
      OptimizerResult out;
      out.x = theta;
      Vector grad;
      out.value = objective(theta, &grad);
      out.gradient_norm = grad.lpNorm<Eigen::Infinity>();
      out.iterations = 1;
      out.converged = std::isfinite(out.value);
      require(out.converged, ErrorCode::kOptimizerDiverged, "non-finite OWGMM objective at the solution");
      return out;
    }
    return quasi_newton(objective, config.box->project(theta), config.optimizer, config.box);
  }
  return quasi_newton_restarts(objective, start, config.optimizer, config.box, config.restarts, config.seed);
}

}  // namespace

OwgmmEstimate owgmm_estimate(const InstrumentBasis& basis, const MomentProblem& problem, const Dataset& data,
                             const Vector& theta_prior, const OwgmmConfig& config) {
  check_output_dim(basis, problem);
  require(config.steps >= 1, ErrorCode::kInvalidArgument, "OWGMM needs at least one step");
  const MomentModel model(basis, problem, data);

  OwgmmEstimate est;
  Vector prior = theta_prior;
  OptimizerResult opt;
  for (int step = 0; step < config.steps; ++step) {
    const bool identity = step == 0 && config.first_stage == FirstStageWeight::kIdentity;
    est.gamma = identity ? SymMatrix::identity(basis.size()) : gamma_matrix(basis, problem, data, prior);
    const SpdFactor weight = spd_factor(est.gamma);
    opt = minimize_weighted(model, weight, prior, config);
    est.stage_thetas.push_back(opt.x);
    prior = opt.x;
  }
  est.theta = opt.x;
  est.objective = opt.value;
  est.gradient_norm = opt.gradient_norm;
  est.iterations = opt.iterations;
  est.converged = opt.converged;
  return est;
}

}  // namespace vmm
