#include "support.hpp"
#include "vmm/kernel_vmm.hpp"
#include "vmm/neural_vmm.hpp"

using namespace vmm;

namespace {

Dataset one_record(const MomentProblem& p, double z, double t, double y) {
  RecordMatrix r(1, 3);
  r << z, t, y;
  return make_dataset(p, r);
}

MlpNetwork constant_net(double c) {
  MlpNetwork net = MlpNetwork::zeros({1, 1});
  net.bias(0)(0) = c;
  return net;
}

}  // namespace

TEST_CASE("zero network outputs zero and has no game value") {
  const MlpNetwork net = MlpNetwork::zeros(MlpNetwork::architecture(2, 5, 2, 3));
  CHECK(net.parameter_count() == (2 * 5 + 5) + (5 * 5 + 5) + (5 * 3 + 3));
  CHECK(net.parameters().size() == net.parameter_count());
  SplitMix64 rng(3);
  for (int i = 0; i < 5; ++i) CHECK(mlp_forward(net, test::random_vector(rng, 2)).isZero(0.0));

  const ProblemPtr p = linear_iv_problem(1);
  const Dataset d = test::linear_iv_data(*p, 20, Vector::Ones(1), 1.0, 4);
  const MlpNetwork z = MlpNetwork::zeros(MlpNetwork::architecture(1, 4, 2, 1));
  for (double th : {-1.0, 0.0, 2.0}) {
    const Vector theta = Vector::Constant(1, th);
    CHECK(nvmm_game_value(z, *p, d, theta, Vector::Zero(1), NoRegularizer{}) == 0.0);
    CHECK(nvmm_game_value(z, *p, d, theta, Vector::Zero(1), FrobeniusRegularizer{{1.0}, 0.3}) == 0.0);
    CHECK(nvmm_game_value(z, *p, d, theta, Vector::Zero(1), KernelRegularizer{{KernelSpec::gaussian(1.0)}, 0.3}) == 0.0);
  }
}

TEST_CASE("a single affine layer computes W z + b") {
  MlpNetwork net = MlpNetwork::zeros({3, 2});
  net.weight(0) << 1.0, -2.0, 0.5, 0.0, 3.0, -1.0;
  net.bias(0) << 0.25, -4.0;
  const Vector z = Eigen::Vector3d(2.0, 1.0, -2.0);
  const Vector out = mlp_forward(net, z);
  CHECK(out(0) == 1.0 * 2 - 2.0 * 1 + 0.5 * -2 + 0.25);
  CHECK(out(1) == 0.0 * 2 + 3.0 * 1 - 1.0 * -2 - 4.0);
  CHECK_CODE(mlp_forward(net, Vector::Zero(2)), ErrorCode::kDimensionMismatch);
}

TEST_CASE("backward matches finite differences of a scalar loss") {
  SplitMix64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const MlpNetwork net = MlpNetwork::he_uniform(MlpNetwork::architecture(2, 6, 2, 2), rng.next());
    const Matrix inputs = test::random_matrix(rng, 7, 2);
    const Matrix upstream = test::random_matrix(rng, 7, 2);
    MlpTape tape;
    net.forward_batch(inputs, &tape);
    const Vector an = mlp_backward(net, tape, upstream);
    const auto loss = [&](const Vector& params) {
      MlpNetwork copy = net;
      copy.set_parameters(params);
      return copy.forward_batch(inputs).cwiseProduct(upstream).sum();
    };
    const Vector fd = test::central_difference(loss, net.parameters(), 1e-6);
    CHECK((an - fd).norm() <= 1e-4 * std::max(1.0, an.norm()));
  }
}

TEST_CASE("game value on a single observation") {
  const ProblemPtr p = linear_iv_problem(1);
  // rho(theta) = y - theta t with t = 1, y = 2
  const Dataset d = one_record(*p, 0.0, 1.0, 2.0);
  const double alpha = 0.6;
  for (double c : {-1.5, 0.5, 2.0}) {
    for (double th : {0.0, 1.0, 3.0}) {
      const double r = 2.0 - th;
      const double rp = 2.0 - 0.5;
      const double expected = c * r - 0.25 * c * c * rp * rp - alpha / 4.0 * c * c;
      const double got = nvmm_game_value(constant_net(c), *p, d, Vector::Constant(1, th), Vector::Constant(1, 0.5),
                                         KernelRegularizer{{KernelSpec::gaussian(1.0)}, alpha});
      CHECK(got == doctest::Approx(expected).epsilon(1e-14));
    }
  }
}

TEST_CASE("kernel and Frobenius regularizers coincide when the Gram matrix is the identity") {
  const ProblemPtr p = linear_iv_problem(1);
  RecordMatrix r(3, 3);
  r << 0.0, 1.0, 0.3, 50.0, -1.0, 2.0, 100.0, 0.5, -1.0;
  const Dataset d = make_dataset(*p, r);
  const MlpNetwork net = MlpNetwork::he_uniform(MlpNetwork::architecture(1, 4, 1, 1), 5);
  const Vector theta = Vector::Constant(1, 0.7);
  const Vector prior = Vector::Constant(1, -0.2);
  const double k = nvmm_game_value(net, *p, d, theta, prior, KernelRegularizer{{KernelSpec::gaussian(0.5)}, 0.4});
  const double f = nvmm_game_value(net, *p, d, theta, prior, FrobeniusRegularizer{{1.0}, 0.4});
  CHECK(test::strict_rel(k, f) <= 1e-12);
}

TEST_CASE("game gradients match finite differences") {
  SplitMix64 rng(20);
  const ProblemPtr p = quantile_iv_problem(0.5, SmoothingConfig{0.5}, IvLayout::contiguous(1, 1));
  const Dataset d = test::linear_iv_data(*p, 25, Vector::Ones(1), 1.0, 7);
  for (const RegularizerChoice& reg : {RegularizerChoice(FrobeniusRegularizer{{1.0}, 0.2}),
                                       RegularizerChoice(KernelRegularizer{{KernelSpec::gaussian(1.0)}, 0.2})}) {
    const NeuralGame game(*p, d, Vector::Constant(1, 0.3), reg);
    MlpNetwork net = MlpNetwork::he_uniform(MlpNetwork::architecture(1, 5, 2, 1), rng.next());
    const Vector theta = Vector::Constant(1, 0.8);
    const NeuralGame::Evaluation ev = game.evaluate(net, theta, true, true);
    CHECK(ev.value == doctest::Approx(game.value(net, theta)).epsilon(1e-14));
    const Vector fd_theta =
        test::central_difference([&](const Vector& th) { return game.value(net, th); }, theta, 1e-4);
    CHECK((ev.theta_gradient - fd_theta).norm() <= 1e-4 * std::max(1.0, fd_theta.norm()));
    const Vector params = net.parameters();
    const Vector fd_params = test::central_difference(
        [&](const Vector& w) {
          MlpNetwork copy = net;
          copy.set_parameters(w);
          return game.value(copy, theta);
        },
        params, 1e-6);
    CHECK((ev.parameter_gradient - fd_params).norm() <= 1e-4 * std::max(1.0, fd_params.norm()));
  }
}

TEST_CASE("the kernel-regularized game never exceeds the closed-form objective") {
  const ProblemPtr p = linear_iv_problem(1);
  const Dataset d = test::linear_iv_data(*p, 40, Vector::Ones(1), 1.0, 8);
  const std::vector<KernelSpec> k{default_kernel(d)};
  const double alpha = 0.05;
  const Vector prior = Vector::Constant(1, 0.5);
  const GramAssembly a = assemble(*p, d, k, prior, alpha);
  const NeuralGame game(*p, d, prior, KernelRegularizer{k, alpha});
  SplitMix64 rng(2);
  for (double th : {-1.0, 0.0, 1.0, 2.5}) {
    const Vector theta = Vector::Constant(1, th);
    MlpNetwork net = MlpNetwork::he_uniform(MlpNetwork::architecture(1, 8, 2, 1), rng.next());
    const double fitted = fit_adversary(net, game, theta);
    CHECK(fitted <= objective(a, *p, d, theta) + 1e-8);
    CHECK(game.value(net, theta) == fitted);
  }
}

TEST_CASE("train_neural_vmm tracks kernel VMM and identifies noiseless designs") {
  const ProblemPtr p = linear_iv_problem(1);
  MinimaxConfig cfg;
  cfg.seed = 9;
  const auto arch = MlpNetwork::architecture(1, 50, 3, 1);
  const RegularizerChoice reg = FrobeniusRegularizer{{1.0}, 0.01};

  const Dataset noisy = test::linear_iv_data(*p, 200, Vector::Ones(1), 1.0, 30);
  VmmConfig vcfg;
  const Vector kernel_theta = minimize(*p, noisy, {default_kernel(noisy)}, Vector::Zero(1), vcfg).theta;
  const NeuralVmmSolution s = train_neural_vmm(*p, noisy, arch, Vector::Zero(1), Vector::Zero(1), reg, cfg);
  CHECK(std::abs(s.theta(0) - kernel_theta(0)) <= 0.15);
  CHECK(s.game_trace.size() == static_cast<std::size_t>(cfg.outer_iterations));

  const Dataset clean = test::linear_iv_data(*p, 200, Vector::Constant(1, 0.8), 0.0, 31);
  const NeuralVmmSolution c = train_neural_vmm(*p, clean, arch, Vector::Zero(1), Vector::Zero(1), reg, cfg);
  CHECK(std::abs(c.theta(0) - 0.8) <= 0.05);

  const NeuralVmmSolution again = train_neural_vmm(*p, noisy, arch, Vector::Zero(1), Vector::Zero(1), reg, cfg);
  CHECK(std::memcmp(again.theta.data(), s.theta.data(), sizeof(double)) == 0);
  CHECK(again.game_trace == s.game_trace);
}

TEST_CASE("minimax config validation") {
  MinimaxConfig cfg;
  cfg.theta_rate = 0.0;
  CHECK_CODE(cfg.validate(), ErrorCode::kInvalidArgument);
  cfg = MinimaxConfig{};
  cfg.adversary_rate = -1.0;
  CHECK_CODE(cfg.validate(), ErrorCode::kInvalidArgument);
}
