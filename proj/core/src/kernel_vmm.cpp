#include "vmm/kernel_vmm.hpp"

#include <algorithm>
#include <string>

#include "vmm/errors.hpp"

namespace vmm {

KernelGrams::KernelGrams(std::vector<KernelSpec> specs, const Matrix& instruments, Index residual_dim)
    : specs_(std::move(specs)), n_(instruments.rows()), m_(residual_dim) {
  require(m_ >= 1, ErrorCode::kInvalidArgument, "residual dimension must be positive");
  require(specs_.size() == 1 || static_cast<Index>(specs_.size()) == m_, ErrorCode::kDimensionMismatch,
          "need one shared kernel or one kernel per residual dimension");
  for (const KernelSpec& spec : specs_) blocks_.push_back(std::move(gram_matrix(spec, instruments).values).release());
}

const Matrix& KernelGrams::block(Index k) const { return blocks_.size() == 1 ? blocks_[0] : blocks_[static_cast<std::size_t>(k)]; }

const KernelSpec& KernelGrams::spec(Index k) const {
  return specs_.size() == 1 ? specs_[0] : specs_[static_cast<std::size_t>(k)];
}

Vector KernelGrams::apply(const Vector& v) const { return apply(Matrix(v)).col(0); }

Matrix KernelGrams::apply(const Matrix& v) const {
  require(v.rows() == n_ * m_, ErrorCode::kDimensionMismatch, "KernelGrams::apply: wrong row count");
  Matrix out(v.rows(), v.cols());
  for (Index k = 0; k < m_; ++k) out.middleRows(k * n_, n_).noalias() = block(k) * v.middleRows(k * n_, n_);
  return out;
}

Matrix KernelGrams::full() const {
  Matrix l = Matrix::Zero(n_ * m_, n_ * m_);
  for (Index k = 0; k < m_; ++k) l.block(k * n_, k * n_, n_, n_) = block(k);
  return l;
}

KernelSpec default_kernel(const Dataset& data) { return KernelSpec::gaussian(median_bandwidth(data.instruments)); }

namespace {

SpdFactor factor_inner(const KernelGrams& grams, const Matrix& prior, double alpha) {
  require(alpha > 0.0, ErrorCode::kInvalidArgument, "alpha must be positive");
  require(prior.rows() == grams.n() && prior.cols() == grams.m(), ErrorCode::kDimensionMismatch,
          "prior residuals do not match the Gram assembly shape");
  const Index n = grams.n();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix c(n, n);
  for (Index j = 0; j < n; ++j) {
    c.col(j) = grams.block(0).col(j).cwiseProduct(prior.col(0)) * (prior(j, 0) * inv_n);
    for (Index k = 1; k < grams.m(); ++k) {
      c.col(j) += grams.block(k).col(j).cwiseProduct(prior.col(k)) * (prior(j, k) * inv_n);
    }
  }
  c.diagonal().array() += alpha;
  return spd_factor(SymMatrix(std::move(c)));
}

}  // namespace

GramAssembly::GramAssembly(std::shared_ptr<const KernelGrams> grams, Matrix prior_residuals, double alpha)
    : grams_(std::move(grams)),
      prior_(std::move(prior_residuals)),
      alpha_(alpha),
      inner_(factor_inner(*grams_, prior_, alpha)) {}

Matrix GramAssembly::expand(const Matrix& x) const {
  const Index n = this->n();
  Matrix out(n * m(), x.cols());
  for (Index k = 0; k < m(); ++k) out.middleRows(k * n, n) = prior_.col(k).asDiagonal() * x;
  return out;
}

Matrix GramAssembly::contract(const Matrix& w) const {
  const Index n = this->n();
  Matrix out = Matrix::Zero(n, w.cols());
  for (Index k = 0; k < m(); ++k) out += prior_.col(k).asDiagonal() * w.middleRows(k * n, n);
  return out;
}

Vector GramAssembly::apply_weight(const Vector& v) const { return apply_weight(Matrix(v)).col(0); }

Matrix GramAssembly::apply_weight(const Matrix& v) const {
  require(v.rows() == n() * m(), ErrorCode::kDimensionMismatch, "apply_weight: wrong row count");
  const Matrix lv = grams_->apply(v);
  const Matrix s = spd_solve(inner_, contract(lv));
  Matrix correction = grams_->apply(expand(s));
  return (lv - correction / static_cast<double>(n())) / alpha_;
}

SymMatrix GramAssembly::weight_matrix() const {
  return SymMatrix(apply_weight(Matrix(Matrix::Identity(n() * m(), n() * m()))));
}

SymMatrix GramAssembly::prior_gram() const {
  const Matrix lr = grams_->apply(expand(Matrix::Identity(n(), n())));
  return SymMatrix(lr * lr.transpose() / static_cast<double>(n()));
}

GramAssembly assemble(std::shared_ptr<const KernelGrams> grams, const MomentProblem& problem, const Dataset& data,
                      const Vector& theta_prior, double alpha) {
  require(grams->n() == data.size() && grams->m() == problem.residual_dim(), ErrorCode::kDimensionMismatch,
          "Gram matrices were built for a different data shape");
  return GramAssembly(std::move(grams), residual_matrix(problem, data, theta_prior), alpha);
}

GramAssembly assemble(const MomentProblem& problem, const Dataset& data, const std::vector<KernelSpec>& kernels,
                      const Vector& theta_prior, double alpha) {
  auto grams = std::make_shared<const KernelGrams>(kernels, data.instruments, problem.residual_dim());
  return assemble(std::move(grams), problem, data, theta_prior, alpha);
}

double objective(const GramAssembly& assembly, const MomentProblem& problem, const Dataset& data,
                 const Vector& theta) {
  const Vector rho = flatten_residuals(residual_matrix(problem, data, theta));
  const double n = static_cast<double>(data.size());
  return std::max(0.0, rho.dot(assembly.apply_weight(rho)) / (n * n));
}

Vector objective_gradient(const GramAssembly& assembly, const MomentProblem& problem, const Dataset& data,
                          const Vector& theta) {
  const Vector rho = flatten_residuals(residual_matrix(problem, data, theta));
  const double n = static_cast<double>(data.size());
  return 2.0 * stacked_jacobian(problem, data, theta).transpose() * assembly.apply_weight(rho) / (n * n);
}

void AlphaSchedule::validate() const {
  require(scale > 0.0, ErrorCode::kInvalidArgument, "alpha scale must be positive");
  require(exponent >= 0.0, ErrorCode::kInvalidArgument, "alpha exponent must be non-negative");
}

void VmmConfig::validate() const {
  alpha.validate();
  require(optimizer.gradient_tolerance > 0.0, ErrorCode::kInvalidArgument, "gradient tolerance must be positive");
  require(optimizer.max_iterations >= 1, ErrorCode::kInvalidArgument, "max iterations must be positive");
  require(restarts >= 0, ErrorCode::kInvalidArgument, "restart count must be non-negative");
  if (box) box->validate();
}

VmmSolution minimize_assembled(std::shared_ptr<const GramAssembly> assembly, const MomentProblem& problem,
                               const Dataset& data, const Vector& start, const VmmConfig& config) {
  const double n = static_cast<double>(data.size());
  const GramAssembly& asm_ref = *assembly;

  const Objective f = [&](const Vector& theta, Vector* grad) {
    const Vector rho = flatten_residuals(residual_matrix(problem, data, theta));
    const Vector a_rho = asm_ref.apply_weight(rho);
    if (grad != nullptr) *grad = 2.0 * stacked_jacobian(problem, data, theta).transpose() * a_rho / (n * n);
    return std::max(0.0, rho.dot(a_rho) / (n * n));
  };

  OptimizerResult opt;
  bool solved = false;
  if (problem.affine_in_theta()) {
    const Matrix jac = stacked_jacobian(problem, data, start);
    const Vector rho = flatten_residuals(residual_matrix(problem, data, start));
    const Matrix a_jac = asm_ref.apply_weight(jac);
    const SpdFactor normal = spd_factor(SymMatrix(jac.transpose() * a_jac));
    const Vector theta = start - spd_solve(normal, Vector(a_jac.transpose() * rho));
    if (!config.box || config.box->contains(theta)) {
      Vector grad;
      opt.x = theta;
      opt.value = f(theta, &grad);
      require(std::isfinite(opt.value), ErrorCode::kOptimizerDiverged, "non-finite objective at the solution");
      opt.gradient_norm = grad.lpNorm<Eigen::Infinity>();
      opt.iterations = 1;
      opt.converged = opt.gradient_norm <= config.optimizer.gradient_tolerance;
      solved = true;
    } else {
      opt = quasi_newton(f, config.box->project(theta), config.optimizer, config.box);
      solved = true;
    }
  }
  if (!solved) opt = quasi_newton_restarts(f, start, config.optimizer, config.box, config.restarts, config.seed);

  VmmSolution sol;
  sol.theta = opt.x;
  sol.objective = opt.value;
  sol.gradient_norm = opt.gradient_norm;
  sol.converged = opt.converged;
  sol.alpha = asm_ref.alpha();
  sol.stage_steps.push_back(opt.iterations);
  sol.stage_thetas.push_back(opt.x);
  sol.stage_objectives.push_back(opt.value);
  sol.assembly = std::move(assembly);
  return sol;
}

VmmSolution minimize(const MomentProblem& problem, const Dataset& data, const std::vector<KernelSpec>& kernels,
                     const Vector& theta_prior, const VmmConfig& config) {
  return k_step_estimate(problem, data, kernels, 1, theta_prior, config);
}

VmmSolution k_step_estimate(const MomentProblem& problem, const Dataset& data, const std::vector<KernelSpec>& kernels,
                            int k, const Vector& theta0_init, const VmmConfig& config) {
  require(k >= 1, ErrorCode::kInvalidArgument, "k-step estimation needs k >= 1");
  config.validate();
  require(theta0_init.size() == problem.param_dim(), ErrorCode::kDimensionMismatch,
          "initial theta has the wrong dimension");
  auto grams = std::make_shared<const KernelGrams>(kernels, data.instruments, problem.residual_dim());
  const double alpha = config.alpha(data.size());

  VmmSolution result;
  Vector prior = theta0_init;
  for (int stage = 0; stage < k; ++stage) {
    auto assembly = std::make_shared<const GramAssembly>(assemble(grams, problem, data, prior, alpha));
    VmmSolution stage_sol = minimize_assembled(std::move(assembly), problem, data, prior, config);
    result.stage_steps.push_back(stage_sol.stage_steps.front());
    result.stage_thetas.push_back(stage_sol.theta);
    result.stage_objectives.push_back(stage_sol.objective);
    prior = stage_sol.theta;
    result.theta = stage_sol.theta;
    result.objective = stage_sol.objective;
    result.gradient_norm = stage_sol.gradient_norm;
    result.converged = stage_sol.converged;
    result.alpha = alpha;
    result.assembly = std::move(stage_sol.assembly);
  }
  return result;
}

double KernelIvResult::predict(const Vector& t) const {
  return (cross_gram(kernel_g, Matrix(t.transpose()), t_points) * beta)(0);
}

Vector KernelIvResult::predict(const Matrix& t) const { return cross_gram(kernel_g, t, t_points) * beta; }

KernelIvResult kernel_iv_closed_form(const KernelIvData& data, const KernelSpec& kernel_f, const KernelSpec& kernel_g,
                                     const std::function<double(const Vector&)>& theta_prior, double alpha,
                                     double lambda) {
  const Index n = data.y.size();
  require(n >= 1 && data.z.rows() == n && data.t.rows() == n, ErrorCode::kDimensionMismatch,
          "kernel IV data blocks differ in length");
  require(lambda >= 0.0, ErrorCode::kInvalidArgument, "lambda must be non-negative");
  Matrix prior_residuals(n, 1);
  for (Index j = 0; j < n; ++j) prior_residuals(j, 0) = data.y(j) - theta_prior(data.t.row(j).transpose());

  auto grams = std::make_shared<const KernelGrams>(std::vector<KernelSpec>{kernel_f}, data.z, 1);
  const GramAssembly assembly(std::move(grams), prior_residuals, alpha);
  const Matrix m = assembly.weight_matrix().matrix() / (static_cast<double>(n) * static_cast<double>(n));
  const Matrix lg = gram_matrix(kernel_g, data.t).matrix();

  KernelIvResult result;
  result.t_points = data.t;
  result.kernel_g = kernel_g;
  if (lambda > 0.0) {
    // Any solution of (M L_g + lambda I) beta = M Y solves the normal equations
    // L_g (M L_g + lambda I) beta = L_g M Y, and M L_g has non-negative spectrum.
    const Matrix system = m * lg + lambda * Matrix::Identity(n, n);
    result.beta = system.partialPivLu().solve(m * data.y);
    return result;
  }
  const Matrix lg_m = lg * m;
  const SpdFactor system = spd_factor(SymMatrix(lg_m * lg));
  result.beta = spd_solve(system, Vector(lg_m * data.y));
  result.jitter_used = system.jitter_used();
  return result;
}

}  // namespace vmm
