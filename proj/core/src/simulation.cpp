#include "vmm/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "vmm/errors.hpp"
#include "vmm/rng.hpp"

namespace vmm {

std::string to_string(DgpKind kind) {
  switch (kind) {
    case DgpKind::kLinearIvHomoskedastic: return "linear_iv_homoskedastic";
    case DgpKind::kLinearIvHeteroskedastic: return "linear_iv_heteroskedastic";
    case DgpKind::kQuantileIv: return "quantile_iv";
    case DgpKind::kDensityRatioChain: return "density_ratio_chain";
  }
  return "unknown";
}

DgpKind dgp_kind_from_string(const std::string& name) {
  for (DgpKind k : {DgpKind::kLinearIvHomoskedastic, DgpKind::kLinearIvHeteroskedastic, DgpKind::kQuantileIv,
                    DgpKind::kDensityRatioChain}) {
    if (to_string(k) == name) return k;
  }
  raise(ErrorCode::kInvalidArgument, "unknown design kind '" + name + "'");
}

std::string to_string(HeteroScale scale) {
  switch (scale) {
    case HeteroScale::kSqrtOnePlusSquare: return "sqrt_one_plus_square";
  }
  return "unknown";
}

HeteroScale hetero_scale_from_string(const std::string& name) {
  if (name == to_string(HeteroScale::kSqrtOnePlusSquare)) return HeteroScale::kSqrtOnePlusSquare;
  raise(ErrorCode::kInvalidArgument, "unknown heteroskedastic scale '" + name + "'");
}

void DgpSpec::validate() const {
  require(std::abs(rho_c) < 1.0, ErrorCode::kInvalidArgument, "confounding correlation must satisfy |rho_c| < 1");
  require(sigma > 0.0 && std::isfinite(sigma), ErrorCode::kInvalidArgument, "sigma must be positive");
  require(a != 0.0 && std::isfinite(a), ErrorCode::kInvalidArgument, "instrument strength a must be non-zero");
  if (kind == DgpKind::kDensityRatioChain) {
    require(behavior_policy.size() == 2 && target_policy.size() == 2, ErrorCode::kInvalidArgument,
            "chain policies need one probability per state");
    for (double p : behavior_policy) {
      require(p > 0.0 && p < 1.0, ErrorCode::kInvalidArgument, "behavior probabilities must lie in (0, 1)");
    }
    for (double p : target_policy) {
      require(p >= 0.0 && p <= 1.0, ErrorCode::kInvalidArgument, "target probabilities must lie in [0, 1]");
    }
    require(chain_fidelity > 0.0 && chain_fidelity < 1.0, ErrorCode::kInvalidArgument,
            "chain fidelity must lie in (0, 1)");
  } else {
    require(theta0.size() >= 1 && theta0.allFinite(), ErrorCode::kInvalidArgument, "theta0 must be a finite vector");
  }
  if (kind == DgpKind::kQuantileIv) {
    require(quantile > 0.0 && quantile < 1.0, ErrorCode::kInvalidArgument, "quantile level must lie in (0, 1)");
    if (smoothing_temperature) {
      require(*smoothing_temperature > 0.0, ErrorCode::kInvalidArgument, "smoothing temperature must be positive");
    }
  }
}

Index DgpSpec::param_dim() const { return kind == DgpKind::kDensityRatioChain ? 1 : theta0.size(); }

Vector chain_stationary(const std::vector<double>& policy, double fidelity) {
  auto to_one = [&](int s) { return policy[static_cast<std::size_t>(s)] * fidelity + (1.0 - policy[static_cast<std::size_t>(s)]) * (1.0 - fidelity); };
  const double p01 = to_one(0);
  const double p10 = 1.0 - to_one(1);
  Vector out(2);
  out << p10 / (p01 + p10), p01 / (p01 + p10);
  return out;
}

namespace {

PolicyFn policy_fn(std::vector<double> policy) {
  return [policy](double action, std::span<const double> state) {
    const double p1 = policy[state[0] > 0.5 ? 1 : 0];
    return action > 0.5 ? p1 : 1.0 - p1;
  };
}

Vector one_hot_state(std::span<const double> state) {
  Vector out = Vector::Zero(2);
  out(state[0] > 0.5 ? 1 : 0) = 1.0;
  return out;
}

double quantile_temperature(const DgpSpec& spec) {
  if (spec.smoothing_temperature) return *spec.smoothing_temperature;
  return 0.05 * spec.sigma;
}

}  // namespace

ProblemPtr dgp_problem(const DgpSpec& spec) {
  spec.validate();
  const Index b = spec.theta0.size();
  switch (spec.kind) {
    case DgpKind::kLinearIvHomoskedastic:
    case DgpKind::kLinearIvHeteroskedastic:
      return linear_iv_problem(IvLayout::contiguous(b, b));
    case DgpKind::kQuantileIv:
      return quantile_iv_problem(spec.quantile, SmoothingConfig{quantile_temperature(spec)}, IvLayout::contiguous(b, b));
    case DgpKind::kDensityRatioChain: {
      auto base = density_ratio_problem(policy_fn(spec.target_policy), policy_fn(spec.behavior_policy), one_hot_state,
                                        2, 1);
      return pin_coordinate(std::move(base), 0, 1.0);
    }
  }
  raise(ErrorCode::kInvalidArgument, "unknown design kind");
}

Vector dgp_true_theta(const DgpSpec& spec) {
  spec.validate();
  if (spec.kind != DgpKind::kDensityRatioChain) return spec.theta0;
  const Vector db = chain_stationary(spec.behavior_policy, spec.chain_fidelity);
  const Vector de = chain_stationary(spec.target_policy, spec.chain_fidelity);
  Vector out(1);
  out(0) = (de(1) / db(1)) / (de(0) / db(0));
  return out;
}

Dataset sample_dgp(const DgpSpec& spec, Index n) { return sample_dgp(spec, n, spec.seed); }

Dataset sample_dgp(const DgpSpec& spec, Index n, std::uint64_t seed) {
  spec.validate();
  require(n >= 1, ErrorCode::kInvalidArgument, "sample size must be positive");
  SplitMix64 rng(seed);
  const ProblemPtr problem = dgp_problem(spec);

  if (spec.kind == DgpKind::kDensityRatioChain) {
    RecordMatrix records(n, 3);
    const Vector start = chain_stationary(spec.behavior_policy, spec.chain_fidelity);
    int s = rng.bernoulli(start(1)) ? 1 : 0;
    for (Index i = 0; i < n; ++i) {
      const int action = rng.bernoulli(spec.behavior_policy[static_cast<std::size_t>(s)]) ? 1 : 0;
      const int next = rng.bernoulli(spec.chain_fidelity) ? action : 1 - action;
      records(i, 0) = s;
      records(i, 1) = action;
      records(i, 2) = next;
      s = next;
    }
    return make_dataset(*problem, std::move(records));
  }

  const Index b = spec.theta0.size();
  const double noise_shift =
      spec.kind == DgpKind::kQuantileIv ? spec.sigma * normal_quantile(spec.quantile) : 0.0;
  const double idio = std::sqrt(1.0 - spec.rho_c * spec.rho_c);
  RecordMatrix records(n, 2 * b + 1);
  for (Index i = 0; i < n; ++i) {
    Vector z(b);
    for (Index l = 0; l < b; ++l) z(l) = rng.normal();
    const double u = rng.normal();
    Vector t(b);
    for (Index l = 0; l < b; ++l) t(l) = spec.a * z(l) + spec.rho_c * u + rng.normal();
    double noise = spec.sigma * (spec.rho_c * u + idio * rng.normal());
    if (spec.kind == DgpKind::kLinearIvHeteroskedastic) noise *= std::sqrt(1.0 + z.squaredNorm());
    records.row(i).head(b) = z.transpose();
    records.row(i).segment(b, b) = t.transpose();
    records(i, 2 * b) = spec.theta0.dot(t) + noise - noise_shift;
  }
  return make_dataset(*problem, std::move(records));
}

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kKernelVmm: return "kernel-vmm";
    case EstimatorKind::kOwgmm: return "owgmm";
    case EstimatorKind::kNeuralVmm: return "neural-vmm";
  }
  return "unknown";
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
  for (EstimatorKind k : {EstimatorKind::kKernelVmm, EstimatorKind::kOwgmm, EstimatorKind::kNeuralVmm}) {
    if (to_string(k) == name) return k;
  }
  raise(ErrorCode::kInvalidArgument, "unknown estimator '" + name + "'");
}

void EstimatorConfig::validate() const {
  require(k >= 1, ErrorCode::kInvalidArgument, "k must be at least 1");
  require(level > 0.0 && level < 1.0, ErrorCode::kInvalidArgument, "level must lie in (0, 1)");
  require(basis_degree >= 0, ErrorCode::kInvalidArgument, "basis degree must be non-negative");
  require(net_width >= 1 && net_depth >= 0, ErrorCode::kInvalidArgument, "invalid network shape");
  require(neural_alpha > 0.0, ErrorCode::kInvalidArgument, "neural alpha must be positive");
  for (const KernelSpec& s : kernels) s.validate();
  vmm.validate();
  if (kind == EstimatorKind::kNeuralVmm) minimax.validate();
}

EstimatorOutput run_estimator(const EstimatorConfig& config, const MomentProblem& problem, const Dataset& data) {
  config.validate();
  const Vector init = config.theta_init ? *config.theta_init : Vector::Zero(problem.param_dim());
  require(init.size() == problem.param_dim(), ErrorCode::kDimensionMismatch, "theta_init has the wrong dimension");
  const std::vector<KernelSpec> kernels =
      config.kernels.empty() ? std::vector<KernelSpec>{default_kernel(data)} : config.kernels;

  EstimatorOutput out;
  switch (config.kind) {
    case EstimatorKind::kKernelVmm: {
      const VmmSolution sol = k_step_estimate(problem, data, kernels, config.k, init, config.vmm);
      out.theta = sol.theta;
      out.objective = sol.objective;
      out.converged = sol.converged;
      if (config.intervals) {
        const Vector prior = config.k >= 2 ? sol.stage_thetas[static_cast<std::size_t>(config.k - 2)] : init;
        out.inference = sandwich_covariance(*sol.assembly, problem, data, sol.theta, prior, config.level);
      }
      break;
    }
    case EstimatorKind::kOwgmm: {
      const InstrumentBasis basis = data.instruments.cols() == 1 ? InstrumentBasis::polynomial(config.basis_degree)
                                                                  : InstrumentBasis::affine(data.instruments.cols());
      const OwgmmEstimate est = owgmm_estimate(basis, problem, data, init, config.owgmm);
      out.theta = est.theta;
      out.objective = est.objective;
      out.converged = est.converged;
      break;
    }
    case EstimatorKind::kNeuralVmm: {
      const auto arch = MlpNetwork::architecture(data.instruments.cols(), config.net_width, config.net_depth,
                                                 problem.residual_dim());
      const RegularizerChoice reg = config.neural_kernel_regularizer
                                        ? RegularizerChoice(KernelRegularizer{kernels, config.neural_alpha})
                                        : RegularizerChoice(FrobeniusRegularizer{{1.0}, config.neural_alpha});
      const NeuralVmmSolution sol = train_neural_vmm(problem, data, arch, init, init, reg, config.minimax);
      out.theta = sol.theta;
      out.objective = sol.game_value;
      out.converged = std::isfinite(sol.game_value);
      break;
    }
  }
  return out;
}

namespace {

double pairwise_range(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 8) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_range(v, lo, mid) + pairwise_range(v, mid, hi);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 == 1 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

}  // namespace

double pairwise_sum(const std::vector<double>& values) { return pairwise_range(values, 0, values.size()); }

MonteCarloSummary summarize(const std::vector<RepResult>& reps, const Vector& theta0, Index n) {
  const Index b = theta0.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  MonteCarloSummary s;
  std::vector<const RepResult*> good;
  std::vector<double> runtimes;
  for (const RepResult& r : reps) {
    runtimes.push_back(r.runtime_seconds);
    if (r.ok) {
      good.push_back(&r);
    } else {
      ++s.failed;
    }
  }
  s.successes = static_cast<Index>(good.size());
  s.mean_runtime_seconds = runtimes.empty() ? 0.0 : pairwise_sum(runtimes) / static_cast<double>(runtimes.size());
  s.bias = Vector::Constant(b, nan);
  s.scaled_variance = Vector::Constant(b, nan);
  s.rmse = Vector::Constant(b, nan);
  s.median_abs_error = Vector::Constant(b, nan);
  s.coverage = Vector::Constant(b, nan);
  if (good.empty()) return s;

  const double count = static_cast<double>(good.size());
  for (Index j = 0; j < b; ++j) {
    std::vector<double> err, sq, abs_err, hits;
    for (const RepResult* r : good) {
      const double e = r->theta(j) - theta0(j);
      err.push_back(e);
      sq.push_back(e * e);
      abs_err.push_back(std::abs(e));
      if (static_cast<Index>(r->intervals.size()) == b) hits.push_back(r->intervals[static_cast<std::size_t>(j)].contains(theta0(j)) ? 1.0 : 0.0);
    }
    const double mean = pairwise_sum(err) / count;
    std::vector<double> dev;
    for (double e : err) dev.push_back((e - mean) * (e - mean));
    s.bias(j) = mean;
    s.scaled_variance(j) = good.size() > 1 ? static_cast<double>(n) * pairwise_sum(dev) / (count - 1.0) : 0.0;
    s.rmse(j) = std::sqrt(pairwise_sum(sq) / count);
    s.median_abs_error(j) = median_of(abs_err);
    if (!hits.empty()) s.coverage(j) = pairwise_sum(hits) / static_cast<double>(hits.size());
  }
  return s;
}

namespace {

RepResult run_rep(const DgpSpec& spec, const EstimatorConfig& config, const MomentProblem& problem, Index n, Index r) {
  RepResult out;
  out.index = r;
  out.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(r));
  const auto start = std::chrono::steady_clock::now();
  try {
    const Dataset data = sample_dgp(spec, n, out.seed);
    EstimatorOutput est = run_estimator(config, problem, data);
    out.theta = std::move(est.theta);
    if (est.inference) out.intervals = est.inference->intervals;
    out.ok = out.theta.allFinite();
    if (!out.ok) out.error = "non-finite estimate";
  } catch (const Error& e) {
    out.ok = false;
    out.error = e.what();
  }
  out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace

MonteCarloResult run_monte_carlo(const DgpSpec& spec, const EstimatorConfig& config, Index n, Index reps,
                                 bool parallel, unsigned threads) {
  spec.validate();
  config.validate();
  require(reps >= 1, ErrorCode::kInvalidArgument, "reps must be at least 1");
  require(n >= 2, ErrorCode::kInvalidArgument, "sample size must be at least 2");
  const ProblemPtr problem = dgp_problem(spec);

  MonteCarloResult result;
  result.n = n;
  result.reps = reps;
  result.theta0 = dgp_true_theta(spec);
  result.rep_results.resize(static_cast<std::size_t>(reps));

  unsigned workers = 1;
  if (parallel) {
    workers = threads > 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<Index>(workers, reps));
  }
  if (workers <= 1) {
    for (Index r = 0; r < reps; ++r) result.rep_results[static_cast<std::size_t>(r)] = run_rep(spec, config, *problem, n, r);
  } else {
    std::atomic<Index> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (Index r = next++; r < reps; r = next++) {
          result.rep_results[static_cast<std::size_t>(r)] = run_rep(spec, config, *problem, n, r);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }
  result.summary = summarize(result.rep_results, result.theta0, n);
  return result;
}

Comparison compare_estimators(const DgpSpec& spec, const std::vector<EstimatorConfig>& configs, Index n, Index reps,
                              bool parallel, unsigned threads) {
  require(configs.size() >= 2, ErrorCode::kInvalidArgument, "comparison needs at least two configurations");
  Comparison cmp;
  for (const EstimatorConfig& c : configs) cmp.results.push_back(run_monte_carlo(spec, c, n, reps, parallel, threads));

  std::vector<std::vector<RepResult>> common(configs.size());
  for (Index r = 0; r < reps; ++r) {
    bool all_ok = true;
    for (const MonteCarloResult& res : cmp.results) all_ok = all_ok && res.rep_results[static_cast<std::size_t>(r)].ok;
    if (!all_ok) continue;
    ++cmp.common_reps;
    for (std::size_t c = 0; c < configs.size(); ++c) common[c].push_back(cmp.results[c].rep_results[static_cast<std::size_t>(r)]);
  }
  const Vector theta0 = dgp_true_theta(spec);
  std::vector<MonteCarloSummary> sums;
  for (const auto& table : common) sums.push_back(summarize(table, theta0, n));
  for (const MonteCarloSummary& s : sums) {
    cmp.variance_ratio.push_back(s.scaled_variance.cwiseQuotient(sums.front().scaled_variance));
    cmp.rmse_difference.push_back(s.rmse - sums.front().rmse);
  }
  return cmp;
}

}  // namespace vmm
