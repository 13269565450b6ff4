#include <benchmark/benchmark.h>

#include <memory>

#include "nfar/learner.hpp"
#include "nfar/model.hpp"

using namespace nfar;

namespace {

GridField random_field(GridSpec spec, std::uint64_t seed) {
  rng::Stream stream(seed);
  GridField f(spec);
  for (auto& x : f.values()) {
    x = stream.normal();
  }
  return f;
}

void BM_SampleField(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  auto spectrum = std::make_shared<const CirculantSpectrum>(
      build_spectrum(StationaryKernel{5.0}, GridSpec{s}));
  NoiseSampler sampler(spectrum, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sampler.sample());
  }
}
BENCHMARK(BM_SampleField)->Arg(16)->Arg(32)->Arg(100);

void BM_ApplyTrueOperator(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  NfarModel m;
  m.grid = GridSpec{s};
  const GridField z = random_field(m.grid, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply_true_operator(m, z));
  }
}
BENCHMARK(BM_ApplyTrueOperator)->Arg(16)->Arg(32);

void BM_ApplyTrueOperatorFft(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  NfarModel m;
  m.grid = GridSpec{s};
  const GridField z = random_field(m.grid, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply_true_operator_fft(m, z));
  }
}
BENCHMARK(BM_ApplyTrueOperatorFft)->Arg(32)->Arg(100);

void BM_MlpForwardBackward(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0));
  MlpArchitecture arch;
  rng::Stream stream(3);
  MlpParams p = glorot_init(arch, stream);
  MlpGradients g = zero_gradients(arch);
  Eigen::MatrixXd x(rows, 5);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < 5; ++c) {
      x(r, c) = stream.normal();
    }
  }
  MlpWorkspace ws;
  Eigen::VectorXd dout = Eigen::VectorXd::Constant(rows, 1e-3);
  for (auto _ : state) {
    const Eigen::VectorXd& out = ws.forward(p, x);
    benchmark::DoNotOptimize(out.sum());
    g.set_zero();
    ws.backward(p, dout, g);
    benchmark::DoNotOptimize(g.weights.back()(0, 0));
  }
  // fwd ~2*(5*32 + 4*32*32 + 32) flops/row, bwd about twice that
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(2048)->Arg(8192)->Arg(65536);

void BM_ApplyOperatorFullSum(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  MlpArchitecture arch;
  rng::Stream stream(4);
  OperatorModel op{glorot_init(arch, stream), GridSpec{s},
                   Integration::FullSum};
  const GridField z = random_field(GridSpec{s}, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply_operator(op, z));
  }
}
BENCHMARK(BM_ApplyOperatorFullSum)->Arg(16)->Arg(25);

} // namespace

BENCHMARK_MAIN();
