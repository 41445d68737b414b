// Serial reference against the OpenMP kernels on the same inputs.

#include <cstddef>
#include <vector>

#include <benchmark/benchmark.h>

#include "fairlab/kernels.hpp"
#include "fairlab/rng.hpp"

namespace k = fairlab::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  fairlab::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <auto Gemm>
void bm_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    Gemm(a, b, out, k::Dims{n, n, n});
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <auto Dist>
void bm_sq_distances(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  const auto p = random_values(n * d, 3), g = random_values(n * d, 4);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    Dist(p, g, out, n, n, d);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * d));
}

template <auto Softmax>
void bm_softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 256;
  const auto z = random_values(rows * cols, 5);
  std::vector<double> out(rows * cols);
  for (auto _ : state) {
    Softmax(z, out, rows, cols);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows * cols));
}

}  // namespace

BENCHMARK(bm_gemm<k::serial::gemm>)->Name("gemm/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(bm_gemm<k::parallel::gemm>)->Name("gemm/parallel")->RangeMultiplier(2)->Range(64, 512)->UseRealTime();
BENCHMARK(bm_sq_distances<k::serial::sq_distances>)->Name("sq_distances/serial")->RangeMultiplier(2)->Range(128, 1024);
BENCHMARK(bm_sq_distances<k::parallel::sq_distances>)
    ->Name("sq_distances/parallel")
    ->RangeMultiplier(2)
    ->Range(128, 1024)
    ->UseRealTime();
BENCHMARK(bm_softmax<k::serial::softmax_rows>)->Name("softmax/serial")->RangeMultiplier(4)->Range(256, 16384);
BENCHMARK(bm_softmax<k::parallel::softmax_rows>)->Name("softmax/parallel")->RangeMultiplier(4)->Range(256, 16384)->UseRealTime();

BENCHMARK_MAIN();
