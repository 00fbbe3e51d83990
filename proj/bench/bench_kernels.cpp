// Serial reference vs OpenMP kernels.
//   ./bench_kernels --benchmark_filter=Gemm

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "rtrl/kernels.hpp"
#include "rtrl/nets.hpp"
#include "rtrl/rng.hpp"

namespace {

using Gemm = void (*)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  rtrl::RngStream rng(seed, 0);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

template <Gemm F>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const std::size_t n = 64, k = 64;
  const auto a = random_buffer(m * k, 1);
  const auto b = random_buffer(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    F(m, n, k, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * m * n * k * state.iterations(), benchmark::Counter::kIsRate, benchmark::Counter::kIs1000);
}

BENCHMARK(BM_Gemm<rtrl::kernels::serial::gemm_nn>)->Name("Gemm_nn/serial")->Arg(256)->Arg(3000);
BENCHMARK(BM_Gemm<rtrl::kernels::parallel::gemm_nn>)->Name("Gemm_nn/parallel")->Arg(256)->Arg(3000);
BENCHMARK(BM_Gemm<rtrl::kernels::serial::gemm_tn>)->Name("Gemm_tn/serial")->Arg(256)->Arg(3000);
BENCHMARK(BM_Gemm<rtrl::kernels::parallel::gemm_tn>)->Name("Gemm_tn/parallel")->Arg(256)->Arg(3000);
BENCHMARK(BM_Gemm<rtrl::kernels::serial::gemm_nt>)->Name("Gemm_nt/serial")->Arg(256)->Arg(3000);
BENCHMARK(BM_Gemm<rtrl::kernels::parallel::gemm_nt>)->Name("Gemm_nt/parallel")->Arg(256)->Arg(3000);

void BM_TanhStd(benchmark::State& state) {
  const auto src = random_buffer(static_cast<std::size_t>(state.range(0)), 3);
  std::vector<double> x(src.size());
  for (auto _ : state) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::tanh(src[i]);
    benchmark::DoNotOptimize(x.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TanhStd)->Arg(192000);

void BM_TanhKernel(benchmark::State& state) {
  const auto src = random_buffer(static_cast<std::size_t>(state.range(0)), 3);
  std::vector<double> x(src.size());
  for (auto _ : state) {
    x = src;
    rtrl::kernels::tanh_inplace(x.data(), x.size());
    benchmark::DoNotOptimize(x.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TanhKernel)->Arg(192000);

void BM_ValueBackprop(benchmark::State& state) {
  rtrl::RngStream rng(4, 0);
  const auto rows = static_cast<std::size_t>(state.range(0));
  const rtrl::MlpParams psi = rtrl::init_value_params(2, rng);
  rtrl::Mat x(rows, 2);
  for (double& v : x.values()) v = rng.normal();
  rtrl::Vec targets(rows);
  for (double& v : targets) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(rtrl::backprop_value(psi, x, targets));
}
BENCHMARK(BM_ValueBackprop)->Arg(3000);

}  // namespace

BENCHMARK_MAIN();
