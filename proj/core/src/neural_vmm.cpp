#include "vmm/neural_vmm.hpp"

#include <cmath>
#include <numeric>

#include "vmm/errors.hpp"
#include "vmm/rng.hpp"

namespace vmm {

MlpNetwork::MlpNetwork(std::vector<Index> widths) : widths_(std::move(widths)) {
  require(widths_.size() >= 2, ErrorCode::kInvalidArgument, "network needs input and output widths");
  for (Index w : widths_) require(w >= 1, ErrorCode::kInvalidArgument, "layer widths must be positive");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    weights_.push_back(Matrix::Zero(widths_[l + 1], widths_[l]));
    biases_.push_back(Vector::Zero(widths_[l + 1]));
  }
}

MlpNetwork MlpNetwork::zeros(std::vector<Index> widths) { return MlpNetwork(std::move(widths)); }

MlpNetwork MlpNetwork::he_uniform(std::vector<Index> widths, std::uint64_t seed) {
  MlpNetwork net(std::move(widths));
  for (Index l = 0; l < net.layer_count(); ++l) {
    SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(l)));
    Matrix& w = net.weight(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
    for (Index j = 0; j < w.cols(); ++j) {
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-limit, limit);
    }
    const double bias_limit = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (Index i = 0; i < w.rows(); ++i) net.bias(l)(i) = rng.uniform(-bias_limit, bias_limit);
  }
  return net;
}

std::vector<Index> MlpNetwork::architecture(Index input_dim, Index width, Index depth, Index output_dim) {
  std::vector<Index> widths{input_dim};
  for (Index d = 0; d < depth; ++d) widths.push_back(width);
  widths.push_back(output_dim);
  return widths;
}

Index MlpNetwork::parameter_count() const {
  Index count = 0;
  for (Index l = 0; l < layer_count(); ++l) count += weight(l).size() + bias(l).size();
  return count;
}

Vector MlpNetwork::parameters() const {
  Vector out(parameter_count());
  Index offset = 0;
  for (Index l = 0; l < layer_count(); ++l) {
    out.segment(offset, weight(l).size()) = Eigen::Map<const Vector>(weight(l).data(), weight(l).size());
    offset += weight(l).size();
    out.segment(offset, bias(l).size()) = bias(l);
    offset += bias(l).size();
  }
  return out;
}

void MlpNetwork::set_parameters(const Vector& params) {
  require(params.size() == parameter_count(), ErrorCode::kDimensionMismatch, "parameter vector has wrong length");
  Index offset = 0;
  for (Index l = 0; l < layer_count(); ++l) {
    Eigen::Map<Vector>(weight(l).data(), weight(l).size()) = params.segment(offset, weight(l).size());
    offset += weight(l).size();
    bias(l) = params.segment(offset, bias(l).size());
    offset += bias(l).size();
  }
}

Vector MlpNetwork::forward(const Vector& z) const { return forward_batch(Matrix(z.transpose())).row(0).transpose(); }

Matrix MlpNetwork::forward_batch(const Matrix& inputs, MlpTape* tape) const {
  require(inputs.cols() == input_dim(), ErrorCode::kDimensionMismatch, "network input has the wrong dimension");
  if (tape != nullptr) {
    tape->activations.clear();
    tape->preactivations.clear();
  }
  Matrix h = inputs.transpose();
  for (Index l = 0; l < layer_count(); ++l) {
    Matrix pre = weight(l) * h;
    pre.colwise() += bias(l);
    if (tape != nullptr) {
      tape->activations.push_back(h);
      tape->preactivations.push_back(pre);
    }
    h = (l + 1 < layer_count()) ? Matrix(pre.cwiseMax(0.0)) : pre;
  }
  return h.transpose();
}

Vector MlpNetwork::backward(const MlpTape& tape, const Matrix& upstream) const {
  require(static_cast<Index>(tape.activations.size()) == layer_count(), ErrorCode::kInvalidArgument,
          "tape does not match the network");
  require(upstream.cols() == output_dim() && upstream.rows() == tape.activations.front().cols(),
          ErrorCode::kDimensionMismatch, "upstream gradient has the wrong shape");
  Vector grad(parameter_count());
  std::vector<Index> offsets(static_cast<std::size_t>(layer_count()));
  Index offset = 0;
  for (Index l = 0; l < layer_count(); ++l) {
    offsets[static_cast<std::size_t>(l)] = offset;
    offset += weight(l).size() + bias(l).size();
  }
  Matrix delta = upstream.transpose();
  for (Index l = layer_count() - 1; l >= 0; --l) {
    const Index at = offsets[static_cast<std::size_t>(l)];
    const Matrix gw = delta * tape.activations[static_cast<std::size_t>(l)].transpose();
    grad.segment(at, gw.size()) = Eigen::Map<const Vector>(gw.data(), gw.size());
    grad.segment(at + gw.size(), bias(l).size()) = delta.rowwise().sum();
    if (l > 0) {
      delta = (weight(l).transpose() * delta).cwiseProduct(
          (tape.preactivations[static_cast<std::size_t>(l - 1)].array() > 0.0).cast<double>().matrix());
    }
  }
  return grad;
}

Vector mlp_forward(const MlpNetwork& net, const Vector& z) { return net.forward(z); }

Vector mlp_backward(const MlpNetwork& net, const MlpTape& tape, const Matrix& upstream) {
  return net.backward(tape, upstream);
}

NeuralGame::NeuralGame(const MomentProblem& problem, const Dataset& data, const Vector& theta_prior,
                       RegularizerChoice reg)
    : problem_(problem),
      data_(data),
      prior_residuals_(residual_matrix(problem, data, theta_prior)),
      reg_(std::move(reg)) {
  const Index m = problem.residual_dim();
  if (const auto* kernel = std::get_if<KernelRegularizer>(&reg_)) {
    require(kernel->alpha >= 0.0, ErrorCode::kInvalidArgument, "regularizer alpha must be non-negative");
    require(kernel->kernels.size() == 1 || static_cast<Index>(kernel->kernels.size()) == m,
            ErrorCode::kDimensionMismatch, "need one shared kernel or one per residual dimension");
    for (const KernelSpec& spec : kernel->kernels) {
      kernel_factors_.push_back(spd_factor(gram_matrix(spec, data.instruments).values));
    }
  } else if (const auto* frob = std::get_if<FrobeniusRegularizer>(&reg_)) {
    require(frob->alpha >= 0.0, ErrorCode::kInvalidArgument, "regularizer alpha must be non-negative");
    require(static_cast<Index>(frob->sigmas.size()) == m || frob->sigmas.size() == 1, ErrorCode::kDimensionMismatch,
            "need one shared sigma or one per residual dimension");
    for (double s : frob->sigmas) require(s > 0.0, ErrorCode::kInvalidArgument, "Frobenius weights must be positive");
  }
}

double NeuralGame::regularizer(const Matrix& f, Matrix* gradient) const {
  if (gradient != nullptr) gradient->setZero(f.rows(), f.cols());
  if (const auto* kernel = std::get_if<KernelRegularizer>(&reg_)) {
    double total = 0.0;
    for (Index k = 0; k < f.cols(); ++k) {
      const SpdFactor& factor = kernel_factors_.size() == 1 ? kernel_factors_[0] : kernel_factors_[static_cast<std::size_t>(k)];
      const Vector solved = spd_solve(factor, Vector(f.col(k)));
      total += f.col(k).dot(solved);
      if (gradient != nullptr) gradient->col(k) = 0.5 * kernel->alpha * solved;
    }
    return 0.25 * kernel->alpha * total;
  }
  if (const auto* frob = std::get_if<FrobeniusRegularizer>(&reg_)) {
    double total = 0.0;
    for (Index k = 0; k < f.cols(); ++k) {
      const double sigma = frob->sigmas.size() == 1 ? frob->sigmas[0] : frob->sigmas[static_cast<std::size_t>(k)];
      total += f.col(k).squaredNorm() / sigma;
      if (gradient != nullptr) gradient->col(k) = 0.5 * frob->alpha / sigma * f.col(k);
    }
    return 0.25 * frob->alpha * total;
  }
  return 0.0;
}

double NeuralGame::value_at(const Matrix& f, const Vector& theta) const {
  require(f.rows() == data_.size() && f.cols() == problem_.residual_dim(), ErrorCode::kDimensionMismatch,
          "adversary values have the wrong shape");
  const Matrix residuals = residual_matrix(problem_, data_, theta);
  const double n = static_cast<double>(data_.size());
  const Vector weighted = (f.array() * prior_residuals_.array()).rowwise().sum();
  return (f.array() * residuals.array()).sum() / n - 0.25 * weighted.squaredNorm() / n - regularizer(f, nullptr);
}

double NeuralGame::solve_output_layer(MlpNetwork& net, const Vector& theta) const {
  const Index n = data_.size();
  const Index m = problem_.residual_dim();
  require(net.output_dim() == m, ErrorCode::kDimensionMismatch, "network output does not match the residuals");
  const Index last = net.layer_count() - 1;
  MlpTape tape;
  net.forward_batch(data_.instruments, &tape);
  const Index w = net.weight(last).cols();
  const Index p = w + 1;
  Matrix phi(n, p);
  phi.leftCols(w) = tape.activations.back().transpose();
  phi.col(w).setOnes();

  const double nd = static_cast<double>(n);
  const Matrix residuals = residual_matrix(problem_, data_, theta);
  Matrix hessian = Matrix::Zero(m * p, m * p);
  Vector linear(m * p);
  for (Index k = 0; k < m; ++k) {
    linear.segment(k * p, p) = phi.transpose() * residuals.col(k) / nd;
    for (Index l = 0; l < m; ++l) {
      const Vector weights = prior_residuals_.col(k).cwiseProduct(prior_residuals_.col(l));
      hessian.block(k * p, l * p, p, p) = phi.transpose() * weights.asDiagonal() * phi / (2.0 * nd);
    }
    if (const auto* kernel = std::get_if<KernelRegularizer>(&reg_)) {
      const SpdFactor& factor =
          kernel_factors_.size() == 1 ? kernel_factors_[0] : kernel_factors_[static_cast<std::size_t>(k)];
      hessian.block(k * p, k * p, p, p) += 0.5 * kernel->alpha * phi.transpose() * spd_solve(factor, phi);
    } else if (const auto* frob = std::get_if<FrobeniusRegularizer>(&reg_)) {
      const double sigma = frob->sigmas.size() == 1 ? frob->sigmas[0] : frob->sigmas[static_cast<std::size_t>(k)];
      hessian.block(k * p, k * p, p, p) += 0.5 * frob->alpha / sigma * phi.transpose() * phi;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (hessian + hessian.transpose()));
  const double cutoff = 1e-12 * std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  Vector coeffs = eig.eigenvectors().transpose() * linear;
  for (Index j = 0; j < coeffs.size(); ++j) {
    coeffs(j) = eig.eigenvalues()(j) > cutoff ? coeffs(j) / eig.eigenvalues()(j) : 0.0;
  }
  const Vector u = eig.eigenvectors() * coeffs;
  for (Index k = 0; k < m; ++k) {
    net.weight(last).row(k) = u.segment(k * p, w).transpose();
    net.bias(last)(k) = u(k * p + w);
  }
  return value(net, theta);
}

double NeuralGame::value(const MlpNetwork& net, const Vector& theta) const {
  return value_at(net.forward_batch(data_.instruments), theta);
}

NeuralGame::Evaluation NeuralGame::evaluate(const MlpNetwork& net, const Vector& theta, bool want_parameter_gradient,
                                            bool want_theta_gradient, std::span<const Index> rows) const {
  const bool full = rows.empty();
  require(full || supports_minibatch(), ErrorCode::kInvalidArgument,
          "the kernel regularizer needs the full sample; minibatches are not supported");
  const Index nb = full ? data_.size() : static_cast<Index>(rows.size());
  const Index m = problem_.residual_dim();
  auto row_of = [&](Index j) { return full ? j : rows[static_cast<std::size_t>(j)]; };

  Matrix inputs(nb, data_.instruments.cols());
  Matrix prior(nb, m);
  Matrix residuals(nb, m);
  for (Index j = 0; j < nb; ++j) {
    const Index i = row_of(j);
    inputs.row(j) = data_.instruments.row(i);
    prior.row(j) = prior_residuals_.row(i);
    residuals.row(j) = problem_.residual(data_.record(i), theta).transpose();
  }

  MlpTape tape;
  const Matrix f = net.forward_batch(inputs, want_parameter_gradient ? &tape : nullptr);
  const double count = static_cast<double>(nb);
  const Vector weighted = (f.array() * prior.array()).rowwise().sum();

  Evaluation out;
  Matrix reg_grad;
  out.value = (f.array() * residuals.array()).sum() / count - 0.25 * weighted.squaredNorm() / count -
              regularizer(f, want_parameter_gradient ? &reg_grad : nullptr);
  if (want_parameter_gradient) {
    Matrix upstream = residuals / count - (prior.array().colwise() * weighted.array()).matrix() / (2.0 * count);
    upstream -= reg_grad;
    out.parameter_gradient = net.backward(tape, upstream);
  }
  if (want_theta_gradient) {
    out.theta_gradient = Vector::Zero(problem_.param_dim());
    for (Index j = 0; j < nb; ++j) {
      out.theta_gradient += problem_.jacobian(data_.record(row_of(j)), theta).transpose() * f.row(j).transpose();
    }
    out.theta_gradient /= count;
  }
  return out;
}

double nvmm_game_value(const MlpNetwork& net, const MomentProblem& problem, const Dataset& data, const Vector& theta,
                       const Vector& theta_prior, const RegularizerChoice& reg) {
  return NeuralGame(problem, data, theta_prior, reg).value(net, theta);
}

void MinimaxConfig::validate() const {
  require(adversary_steps >= 1, ErrorCode::kInvalidArgument, "adversary steps must be positive");
  require(adversary_rate > 0.0 && theta_rate > 0.0, ErrorCode::kInvalidArgument, "learning rates must be positive");
  require(outer_iterations >= 1, ErrorCode::kInvalidArgument, "outer iterations must be positive");
  require(batch_size >= 0, ErrorCode::kInvalidArgument, "batch size must be non-negative");
  if (box) box->validate();
}

namespace {

void ascend(MlpNetwork& net, const Vector& gradient, double rate, UpdateRule rule, AdamState* adam) {
  Vector params = net.parameters();
  if (rule == UpdateRule::kGradient) {
    params += rate * gradient;
  } else {
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    if (adam->first.size() != params.size()) {
      adam->first = Vector::Zero(params.size());
      adam->second = Vector::Zero(params.size());
      adam->step = 0;
    }
    ++adam->step;
    adam->first = kBeta1 * adam->first + (1.0 - kBeta1) * gradient;
    adam->second = kBeta2 * adam->second + (1.0 - kBeta2) * gradient.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, adam->step);
    const double c2 = 1.0 - std::pow(kBeta2, adam->step);
    params.array() += rate * (adam->first.array() / c1) / ((adam->second.array() / c2).sqrt() + kEps);
  }
  net.set_parameters(params);
}

std::vector<Index> draw_batch(SplitMix64& rng, Index n, Index size) {
  std::vector<Index> rows(static_cast<std::size_t>(size));
  for (Index j = 0; j < size; ++j) rows[static_cast<std::size_t>(j)] = static_cast<Index>(rng.next() % static_cast<std::uint64_t>(n));
  return rows;
}

}  // namespace

double train_adversary(MlpNetwork& net, const NeuralGame& game, const Vector& theta, int steps, double rate,
                       UpdateRule rule, AdamState* adam, bool solve_output) {
  AdamState local;
  if (adam == nullptr) adam = &local;
  if (solve_output) game.solve_output_layer(net, theta);
  for (int s = 0; s < steps; ++s) {
    const auto eval = game.evaluate(net, theta, true, false);
    if (!std::isfinite(eval.value)) raise(ErrorCode::kOptimizerDiverged, "adversary objective became non-finite");
    ascend(net, eval.parameter_gradient, rate, rule, adam);
  }
  if (solve_output) return game.solve_output_layer(net, theta);
  return game.value(net, theta);
}

double fit_adversary(MlpNetwork& net, const NeuralGame& game, const Vector& theta, const AdversaryFitOptions& options) {
  require(options.max_iterations >= 0 && options.initial_step > 0.0 && options.tolerance >= 0.0,
          ErrorCode::kInvalidArgument, "invalid adversary fit options");
  double value = game.solve_output_layer(net, theta);
  double step = options.initial_step;
  int stalled = 0;
  for (int it = 0; it < options.max_iterations; ++it) {
    const Vector params = net.parameters();
    const Vector grad = game.evaluate(net, theta, true, false).parameter_gradient;
    const double slope = grad.squaredNorm();
    if (!(slope > 0.0)) break;
    bool accepted = false;
    for (int trial = 0; trial < 40 && !accepted; ++trial) {
      MlpNetwork candidate = net;
      candidate.set_parameters(params + step * grad);
      const double v = game.solve_output_layer(candidate, theta);
      if (std::isfinite(v) && v >= value + 1e-4 * step * slope) {
        const double gain = v - value;
        net = std::move(candidate);
        value = v;
        accepted = true;
        step *= 2.0;
        stalled = gain < options.tolerance * std::max(1.0, std::abs(value)) ? stalled + 1 : 0;
        if (stalled >= 10) return value;
      } else {
        step *= 0.5;
      }
    }
    if (!accepted) break;
  }
  return value;
}

NeuralVmmSolution train_neural_vmm(const MomentProblem& problem, const Dataset& data,
                                   const std::vector<Index>& architecture, const Vector& theta_init,
                                   const Vector& theta_prior, const RegularizerChoice& reg,
                                   const MinimaxConfig& config) {
  config.validate();
  require(theta_init.size() == problem.param_dim(), ErrorCode::kDimensionMismatch, "theta_init has wrong dimension");
  require(architecture.front() == data.instruments.cols() && architecture.back() == problem.residual_dim(),
          ErrorCode::kDimensionMismatch, "architecture does not match the instrument and residual dimensions");
  const NeuralGame game(problem, data, theta_prior, reg);
  const bool minibatch = config.batch_size > 0 && config.batch_size < data.size();
  require(!minibatch || game.supports_minibatch(), ErrorCode::kInvalidArgument,
          "minibatch training is not available with the kernel regularizer");

  NeuralVmmSolution sol;
  sol.adversary = MlpNetwork::he_uniform(architecture, derive_seed(config.seed, 0));
  sol.theta = config.box ? config.box->project(theta_init) : theta_init;
  SplitMix64 batch_rng(derive_seed(config.seed, 1));
  AdamState adam;
  std::vector<Index> rows;

  for (int outer = 0; outer < config.outer_iterations; ++outer) {
    for (int s = 0; s < config.adversary_steps; ++s) {
      if (minibatch) rows = draw_batch(batch_rng, data.size(), config.batch_size);
      const auto eval = game.evaluate(sol.adversary, sol.theta, true, false, rows);
      if (!std::isfinite(eval.value) || !eval.parameter_gradient.allFinite()) {
        raise(ErrorCode::kOptimizerDiverged, "adversary update produced a non-finite game value");
      }
      ascend(sol.adversary, eval.parameter_gradient, config.adversary_rate, config.adversary_rule, &adam);
    }
    if (config.solve_output_layer) game.solve_output_layer(sol.adversary, sol.theta);
    if (minibatch) rows = draw_batch(batch_rng, data.size(), config.batch_size);
    const auto eval = game.evaluate(sol.adversary, sol.theta, false, true, rows);
    if (!std::isfinite(eval.value) || !eval.theta_gradient.allFinite()) {
      raise(ErrorCode::kOptimizerDiverged, "theta update produced a non-finite game value");
    }
    sol.theta -= config.theta_rate * eval.theta_gradient;
    if (config.box) sol.theta = config.box->project(sol.theta);
    sol.game_trace.push_back(eval.value);
    sol.theta_gradient_norm = eval.theta_gradient.lpNorm<Eigen::Infinity>();
  }
  sol.game_value = game.value(sol.adversary, sol.theta);
  return sol;
}

}  // namespace vmm
