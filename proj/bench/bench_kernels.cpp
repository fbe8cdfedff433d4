// Serial reference kernels against the production (OpenMP) versions.
// Thread count follows OMP_NUM_THREADS.
#include <benchmark/benchmark.h>

#include <vector>

#include "fsloc/kernels.hpp"
#include "fsloc/rng.hpp"

using namespace fsloc;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng r(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = r.normal();
  return v;
}

template <bool Serial>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Serial)
      kernels::serial::matmul_nn(n, n, n, a.data(), b.data(), c.data(), false);
    else
      kernels::matmul_nn(n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}

// Edge-network input for an episode of n nodes at the widest layer.
template <bool Serial>
void BM_pairwise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 112;
  const auto x = random_vector(n * d, 3);
  std::vector<double> out(n * n * d);
  for (auto _ : state) {
    if constexpr (Serial)
      kernels::serial::pairwise_absdiff(n, d, x.data(), out.data());
    else
      kernels::pairwise_absdiff(n, d, x.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

// Extractor first stage on a batch of W = 120 fingerprints.
template <bool Serial>
void BM_conv1d(benchmark::State& state) {
  kernels::Conv1dShape s{static_cast<std::size_t>(state.range(0)), 1, 120, 16, 3, 2, 1, 60};
  const auto x = random_vector(s.batch * s.in_channels * s.length, 4);
  const auto w = random_vector(s.out_channels * s.in_channels * s.kernel, 5);
  const auto bias = random_vector(s.out_channels, 6);
  std::vector<double> y(s.batch * s.out_channels * s.out_length);
  for (auto _ : state) {
    if constexpr (Serial)
      kernels::serial::conv1d_forward(s, x.data(), w.data(), bias.data(), y.data());
    else
      kernels::conv1d_forward(s, x.data(), w.data(), bias.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_matmul<true>)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_matmul<false>)->Name("matmul/production")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_pairwise<true>)->Name("pairwise_absdiff/serial")->Arg(31)->Arg(91);
BENCHMARK(BM_pairwise<false>)->Name("pairwise_absdiff/production")->Arg(31)->Arg(91);
BENCHMARK(BM_conv1d<true>)->Name("conv1d/serial")->Arg(32)->Arg(256);
BENCHMARK(BM_conv1d<false>)->Name("conv1d/production")->Arg(32)->Arg(256);

BENCHMARK_MAIN();
