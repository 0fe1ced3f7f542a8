#include <cmath>

#include "internal.hpp"
#include "vmm/kernel_vmm.hpp"
#include "vmm/neural_vmm.hpp"

namespace vmm::verify {

using namespace detail;

namespace {

// Five-point central difference of f along coordinate j.
template <typename F>
double central_difference(F&& f, Vector x, Index j, double h) {
  const double x0 = x(j);
  auto at = [&](double offset) {
    x(j) = x0 + offset;
    return f(x);
  };
  return (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
}

double gradient_error(const Vector& analytic, const Vector& numeric) {
  const double scale = std::max({analytic.lpNorm<Eigen::Infinity>(), numeric.lpNorm<Eigen::Infinity>(), 1e-12});
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
}

Dataset iv_dataset(SplitMix64& rng, const MomentProblem& problem, Index n, Index b) {
  RecordMatrix records(n, 2 * b + 1);
  for (Index i = 0; i < n; ++i) {
    const double u = rng.normal();
    double y = 0.5 * u + rng.normal();
    for (Index l = 0; l < b; ++l) {
      records(i, l) = rng.normal();
      records(i, b + l) = records(i, l) + 0.5 * u + rng.normal();
      y += records(i, b + l);
    }
    records(i, 2 * b) = y;
  }
  return make_dataset(problem, std::move(records));
}

}  // namespace

SuiteReport gradients_suite(std::uint64_t seed) {
  return timed_suite("gradients", seed, [&](SuiteReport& report) {
    constexpr double kKernelTol = 1e-6;
    constexpr double kNeuralTol = 1e-4;

    for (int inst = 0; inst < 100; ++inst) {
      SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(inst)));
      const Index n = uniform_index(rng, 10, 40);
      const Index b = uniform_index(rng, 1, 2);
      const bool quantile = inst % 2 == 1;
      const IvLayout layout = IvLayout::contiguous(b, b);
      ProblemPtr problem = linear_iv_problem(layout);
      Dataset data = iv_dataset(rng, *problem, n, b);
      if (quantile) {
        Vector y(n);
        for (Index i = 0; i < n; ++i) y(i) = data.records(i, 2 * b);
        problem = quantile_iv_problem(rng.uniform(0.2, 0.8), default_smoothing(y), layout);
      }
      const std::vector<KernelSpec> kernels{KernelSpec::gaussian(median_bandwidth(data.instruments) * rng.uniform(0.5, 2.0))};
      Vector theta(b), prior(b);
      for (Index j = 0; j < b; ++j) {
        theta(j) = rng.normal(1.0, 0.5);
        prior(j) = rng.normal(1.0, 0.5);
      }
      const GramAssembly assembly = assemble(*problem, data, kernels, prior, log_uniform(rng, 0.01, 1.0));
      const Vector analytic = objective_gradient(assembly, *problem, data, theta);
      Vector numeric(b);
      const auto j_of = [&](const Vector& x) { return objective(assembly, *problem, data, x); };
      for (Index j = 0; j < b; ++j) numeric(j) = central_difference(j_of, theta, j, 1e-4 * std::max(1.0, std::abs(theta(j))));
      const double err = gradient_error(analytic, numeric);
      Check c;
      c.name = std::string("kernel-vmm ") + (quantile ? "quantile" : "linear") + " point " + std::to_string(inst);
      c.value = err;
      c.threshold = kKernelTol;
      c.passed = err <= kKernelTol;
      report.checks.push_back(c);
    }

    for (int inst = 0; inst < 100; ++inst) {
      SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(1000 + inst)));
      const Index n = uniform_index(rng, 10, 20);
      const bool two_eq = inst % 2 == 1;
      ProblemPtr problem;
      Dataset data;
      if (two_eq) {
        problem = std::make_shared<TwoEquationProblem>(1);
        RecordMatrix records(n, 5);
        for (Index i = 0; i < n; ++i) {
          const double z = rng.normal();
          records(i, 0) = z;
          records(i, 1) = z + rng.normal();
          records(i, 2) = z * z + rng.normal();
          records(i, 3) = records(i, 1) + rng.normal();
          records(i, 4) = records(i, 2) + rng.normal();
        }
        data = make_dataset(*problem, std::move(records));
      } else {
        problem = linear_iv_problem(1);
        data = iv_dataset(rng, *problem, n, 1);
      }
      const Index m = problem->residual_dim();
      const Index b = problem->param_dim();
      RegularizerChoice reg;
      switch (inst % 3) {
        case 0: reg = KernelRegularizer{{KernelSpec::gaussian(0.1 * median_bandwidth(data.instruments))}, rng.uniform(0.05, 1.0)}; break;
        case 1: reg = FrobeniusRegularizer{{rng.uniform(0.5, 2.0)}, rng.uniform(0.05, 1.0)}; break;
        default: reg = NoRegularizer{}; break;
      }
      Vector theta(b), prior(b);
      for (Index j = 0; j < b; ++j) {
        theta(j) = rng.normal();
        prior(j) = rng.normal();
      }
      const NeuralGame game(*problem, data, prior, reg);
      const Index width = uniform_index(rng, 3, 8);
      const Index depth = uniform_index(rng, 1, 2);
      MlpNetwork net = MlpNetwork::he_uniform(MlpNetwork::architecture(1, width, depth, m), rng.next());
      const auto eval = game.evaluate(net, theta, true, true);

      const Vector params = net.parameters();
      Vector numeric(params.size());
      const auto v_of_params = [&](const Vector& p) {
        MlpNetwork copy = net;
        copy.set_parameters(p);
        return game.value(copy, theta);
      };
      for (Index j = 0; j < params.size(); ++j) numeric(j) = central_difference(v_of_params, params, j, 1e-6);
      Vector numeric_theta(b);
      const auto v_of_theta = [&](const Vector& t) { return game.value(net, t); };
      for (Index j = 0; j < b; ++j) numeric_theta(j) = central_difference(v_of_theta, theta, j, 1e-6);

      const double err = std::max(gradient_error(eval.parameter_gradient, numeric),
                                  gradient_error(eval.theta_gradient, numeric_theta));
      Check c;
      c.name = std::string("neural ") + (inst % 3 == 0 ? "kernel" : inst % 3 == 1 ? "frobenius" : "none") + " point " +
               std::to_string(inst);
      c.value = err;
      c.threshold = kNeuralTol;
      c.passed = err <= kNeuralTol;
      report.checks.push_back(c);
    }
  });
}

SuiteReport neural_dominance_suite(std::uint64_t seed) {
  return timed_suite("neural-dominance", seed, [&](SuiteReport& report) {
    constexpr double kSlack = 1e-8;
    const DgpSpec spec = standard_design(DgpKind::kLinearIvHomoskedastic, derive_seed(seed, 0));
    const ProblemPtr problem = dgp_problem(spec);
    const Dataset data = sample_dgp(spec, 30);
    const std::vector<KernelSpec> kernels{KernelSpec::gaussian(0.1 * median_bandwidth(data.instruments))};
    const double alpha = 0.1;
    const Vector prior = Vector::Constant(1, 0.5);
    const GramAssembly assembly = assemble(*problem, data, kernels, prior, alpha);
    const NeuralGame game(*problem, data, prior, KernelRegularizer{kernels, alpha});
    const auto arch = MlpNetwork::architecture(1, 50, 3, 1);

    double worst_excess = -1e300;
    Index evaluations = 0;
    auto record = [&](double value, double closed) {
      ++evaluations;
      worst_excess = std::max(worst_excess, (value - closed) / std::max(1.0, std::abs(closed)));
    };

    SplitMix64 rng(derive_seed(seed, 1));
    for (int draw = 0; draw < 200; ++draw) {
      MlpNetwork net = MlpNetwork::he_uniform(arch, rng.next());
      const double scale = log_uniform(rng, 1e-3, 1.0);
      const Index last = net.layer_count() - 1;
      net.weight(last) *= scale;
      net.bias(last) *= scale;
      const Vector theta = Vector::Constant(1, rng.uniform(-1.0, 3.0));
      record(game.value(net, theta), objective(assembly, *problem, data, theta));
    }

    constexpr double kRel = 0.1;
    constexpr double kAbs = 1e-3;
    for (int g = 0; g < 11; ++g) {
      const Vector theta = Vector::Constant(1, 0.2 * g);
      const double closed = objective(assembly, *problem, data, theta);
      double best = -1e300;
      for (int restart = 0; restart < 10; ++restart) {
        MlpNetwork net = MlpNetwork::he_uniform(arch, derive_seed(seed, 100 + 16 * static_cast<std::uint64_t>(g) + restart));
        AdversaryFitOptions options;
        options.max_iterations = 300;
        const double value = fit_adversary(net, game, theta, options);
        record(value, closed);
        best = std::max(best, value);
      }
      const double tol = std::max(kRel * std::abs(closed), kAbs);
      Check c;
      c.name = "surrogate theta=" + fmt("%.1f", theta(0));
      c.value = std::abs(best - closed);
      c.threshold = tol;
      c.passed = c.value <= tol;
      c.detail = fmt("closed=%.10g neural=%.10g", closed, best);
      report.checks.push_back(c);
    }

    Check dom;
    dom.name = "dominance";
    dom.value = worst_excess;
    dom.threshold = kSlack;
    dom.passed = worst_excess <= kSlack;
    dom.detail = std::to_string(evaluations) + " evaluations; value is max (neural - closed) / max(1, |closed|)";
    report.checks.insert(report.checks.begin(), dom);
  });
}

}  // namespace vmm::verify
