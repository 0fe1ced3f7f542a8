#include <benchmark/benchmark.h>

#include "vmm/kernel_vmm.hpp"
#include "vmm/neural_vmm.hpp"
#include "vmm/simulation.hpp"

namespace {

vmm::Dataset design(vmm::Index n) {
  vmm::DgpSpec spec;
  spec.seed = 1;
  return vmm::sample_dgp(spec, n);
}

void BM_GramMatrix(benchmark::State& state) {
  const vmm::Dataset d = design(state.range(0));
  const vmm::KernelSpec k = vmm::default_kernel(d);
  for (auto _ : state) benchmark::DoNotOptimize(vmm::gram_matrix(k, d.instruments));
}
BENCHMARK(BM_GramMatrix)->Arg(250)->Arg(500)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_SpdFactor(benchmark::State& state) {
  const vmm::Dataset d = design(state.range(0));
  const vmm::SymMatrix g = vmm::gram_matrix(vmm::default_kernel(d), d.instruments).values;
  for (auto _ : state) benchmark::DoNotOptimize(vmm::spd_factor(g));
}
BENCHMARK(BM_SpdFactor)->Arg(250)->Arg(500)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_Assemble(benchmark::State& state) {
  const vmm::Dataset d = design(state.range(0));
  const vmm::ProblemPtr p = vmm::linear_iv_problem(1);
  const std::vector<vmm::KernelSpec> k{vmm::default_kernel(d)};
  for (auto _ : state) benchmark::DoNotOptimize(vmm::assemble(*p, d, k, vmm::Vector::Zero(1), 0.01));
}
BENCHMARK(BM_Assemble)->Arg(250)->Arg(500)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_Objective(benchmark::State& state) {
  const vmm::Dataset d = design(state.range(0));
  const vmm::ProblemPtr p = vmm::linear_iv_problem(1);
  const vmm::GramAssembly a = vmm::assemble(*p, d, {vmm::default_kernel(d)}, vmm::Vector::Zero(1), 0.01);
  const vmm::Vector theta = vmm::Vector::Constant(1, 0.9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(vmm::objective(a, *p, d, theta));
    benchmark::DoNotOptimize(vmm::objective_gradient(a, *p, d, theta));
  }
}
BENCHMARK(BM_Objective)->Arg(250)->Arg(500)->Arg(1000)->Arg(2000)->Unit(benchmark::kMicrosecond);

void BM_KStep(benchmark::State& state) {
  const vmm::Dataset d = design(state.range(0));
  const vmm::ProblemPtr p = vmm::linear_iv_problem(1);
  const std::vector<vmm::KernelSpec> k{vmm::default_kernel(d)};
  const vmm::VmmConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(vmm::k_step_estimate(*p, d, k, 2, vmm::Vector::Zero(1), cfg));
}
BENCHMARK(BM_KStep)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);

void BM_NeuralGame(benchmark::State& state) {
  const vmm::Dataset d = design(state.range(0));
  const vmm::ProblemPtr p = vmm::linear_iv_problem(1);
  const vmm::NeuralGame game(*p, d, vmm::Vector::Zero(1), vmm::FrobeniusRegularizer{{1.0}, 0.01});
  const vmm::MlpNetwork net = vmm::MlpNetwork::he_uniform(vmm::MlpNetwork::architecture(1, 50, 3, 1), 3);
  const vmm::Vector theta = vmm::Vector::Constant(1, 0.9);
  for (auto _ : state) benchmark::DoNotOptimize(game.evaluate(net, theta, true, true));
}
BENCHMARK(BM_NeuralGame)->Arg(200)->Arg(1000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
