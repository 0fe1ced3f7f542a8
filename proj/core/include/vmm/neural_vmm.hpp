#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "vmm/kernels.hpp"
#include "vmm/moments.hpp"
#include "vmm/optimize.hpp"

namespace vmm {

/// Cached intermediate values of a batched forward pass. Column j of every
/// matrix belongs to sample j.
struct MlpTape {
  std::vector<Matrix> activations;     // input of each affine layer
  std::vector<Matrix> preactivations;  // output of each affine layer
};

/// Fully connected network with ReLU on hidden layers and identity output.
class MlpNetwork {
 public:
  MlpNetwork() = default;
  /// widths = {input, hidden..., output}; at least two entries.
  static MlpNetwork zeros(std::vector<Index> widths);
  /// He-style uniform weights U(-sqrt(6 / fan_in), sqrt(6 / fan_in)) and biases
  /// U(-1 / sqrt(fan_in), 1 / sqrt(fan_in)), one counter-derived stream per layer.
  static MlpNetwork he_uniform(std::vector<Index> widths, std::uint64_t seed);
  /// {input, width x depth, output}.
  static std::vector<Index> architecture(Index input_dim, Index width, Index depth, Index output_dim);

  const std::vector<Index>& widths() const { return widths_; }
  Index input_dim() const { return widths_.front(); }
  Index output_dim() const { return widths_.back(); }
  Index layer_count() const { return static_cast<Index>(weights_.size()); }
  Index parameter_count() const;

  Matrix& weight(Index layer) { return weights_[static_cast<std::size_t>(layer)]; }
  const Matrix& weight(Index layer) const { return weights_[static_cast<std::size_t>(layer)]; }
  Vector& bias(Index layer) { return biases_[static_cast<std::size_t>(layer)]; }
  const Vector& bias(Index layer) const { return biases_[static_cast<std::size_t>(layer)]; }

  /// Layer by layer: weights (column-major) then bias.
  Vector parameters() const;
  void set_parameters(const Vector& params);

  Vector forward(const Vector& z) const;
  /// Rows of `inputs` are samples; returns n x output_dim.
  Matrix forward_batch(const Matrix& inputs, MlpTape* tape = nullptr) const;
  /// Gradient of sum_{i,k} upstream(i, k) * output(i, k) with respect to the
  /// flattened parameters, for the batch recorded in `tape`.
  Vector backward(const MlpTape& tape, const Matrix& upstream) const;

 private:
  explicit MlpNetwork(std::vector<Index> widths);

  std::vector<Index> widths_;
  std::vector<Matrix> weights_;  // out x in
  std::vector<Vector> biases_;
};

Vector mlp_forward(const MlpNetwork& net, const Vector& z);
Vector mlp_backward(const MlpNetwork& net, const MlpTape& tape, const Matrix& upstream);

/// (alpha / 4) sum_k f_k^T K_k^{-1} f_k on the evaluated adversary columns.
struct KernelRegularizer {
  std::vector<KernelSpec> kernels;
  double alpha = 0.0;
};

/// (alpha / 4) sum_k (1 / sigma_k) sum_i f(Z_i)_k^2.
struct FrobeniusRegularizer {
  std::vector<double> sigmas;
  double alpha = 0.0;
};

struct NoRegularizer {};

using RegularizerChoice = std::variant<NoRegularizer, KernelRegularizer, FrobeniusRegularizer>;

/// The inner objective
///   U(theta, f) = E_n[f(Z)^T rho(theta)] - 1/4 E_n[(f(Z)^T rho(prior))^2] - R(f).
/// Holds references to the problem and data; both must outlive the game.
class NeuralGame {
 public:
  NeuralGame(const MomentProblem& problem, const Dataset& data, const Vector& theta_prior, RegularizerChoice reg);

  struct Evaluation {
    double value = 0.0;
    Vector parameter_gradient;  // empty unless requested
    Vector theta_gradient;      // empty unless requested
  };

  double value(const MlpNetwork& net, const Vector& theta) const;
  /// `rows` selects a minibatch; empty means the full sample.
  Evaluation evaluate(const MlpNetwork& net, const Vector& theta, bool want_parameter_gradient,
                      bool want_theta_gradient, std::span<const Index> rows = {}) const;
  /// U for explicit adversary values (n x m) on the full sample.
  double value_at(const Matrix& adversary_values, const Vector& theta) const;
  /// U is a concave quadratic in the output layer for fixed hidden features.
  /// Replaces the output weights and biases with the maximizer (minimum-norm
  /// when it is not unique) and returns the new value.
  double solve_output_layer(MlpNetwork& net, const Vector& theta) const;

  const Dataset& data() const { return data_; }
  const MomentProblem& problem() const { return problem_; }
  bool supports_minibatch() const { return kernel_factors_.empty(); }

 private:
  double regularizer(const Matrix& f, Matrix* gradient) const;

  const MomentProblem& problem_;
  const Dataset& data_;
  Matrix prior_residuals_;
  RegularizerChoice reg_;
  std::vector<SpdFactor> kernel_factors_;
};

double nvmm_game_value(const MlpNetwork& net, const MomentProblem& problem, const Dataset& data, const Vector& theta,
                       const Vector& theta_prior, const RegularizerChoice& reg);

enum class UpdateRule { kGradient, kAdam };

struct MinimaxConfig {
  int adversary_steps = 5;
  double adversary_rate = 1e-2;
  double theta_rate = 1e-1;
  int outer_iterations = 2000;
  Index batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  UpdateRule adversary_rule = UpdateRule::kGradient;
  /// Follow each round of adversary steps with an exact output-layer solve.
  bool solve_output_layer = false;
  std::optional<Box> box;

  void validate() const;
};

/// Adam moment estimates for one parameter vector.
struct AdamState {
  Vector first;
  Vector second;
  int step = 0;
};

/// Gradient ascent on the adversary at fixed theta. With `solve_output` the
/// output layer is solved exactly before and after the steps. Returns the final value.
double train_adversary(MlpNetwork& net, const NeuralGame& game, const Vector& theta, int steps, double rate,
                       UpdateRule rule, AdamState* adam = nullptr, bool solve_output = false);

struct AdversaryFitOptions {
  int max_iterations = 500;
  double initial_step = 1e-3;
  /// Stop after ten accepted steps in a row each gain less than this, relative to max(1, |value|).
  double tolerance = 1e-10;
};

/// Fits the adversary at fixed theta until the value stalls: the output layer
/// is solved exactly, then the remaining parameters take backtracking ascent
/// steps, each followed by a fresh output-layer solve. The value never decreases.
double fit_adversary(MlpNetwork& net, const NeuralGame& game, const Vector& theta,
                     const AdversaryFitOptions& options = {});

struct NeuralVmmSolution {
  Vector theta;
  double game_value = 0.0;
  double theta_gradient_norm = 0.0;
  std::vector<double> game_trace;  // value after each outer iteration
  MlpNetwork adversary;
};

/// Alternating minimax: `adversary_steps` ascent steps on f, then one
/// descent step on theta, for `outer_iterations` rounds. Returns the last iterate.
NeuralVmmSolution train_neural_vmm(const MomentProblem& problem, const Dataset& data,
                                   const std::vector<Index>& architecture, const Vector& theta_init,
                                   const Vector& theta_prior, const RegularizerChoice& reg,
                                   const MinimaxConfig& config);

}  // namespace vmm
