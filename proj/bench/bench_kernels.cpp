// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels against their OpenMP counterparts. Sizes straddle
// kParallelThreshold so the single-thread fallback shows up too.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "avoid/kernels.hpp"

namespace k = avoid::kernels;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

template <bool Parallel>
void BM_Matvec(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 256;
  const auto w = random_floats(rows * cols, 1);
  const auto x = random_floats(cols, 2);
  std::vector<float> out(rows);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::matvec(w, x, out);
    } else {
      k::serial::matvec(w, x, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols));
}

// query against n negative hidden states of width 32
template <bool Parallel>
void BM_MaxCosine(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 32;
  const auto rows = random_floats(n * dim, 3);
  const auto q = random_floats(dim, 4);
  for (auto _ : state) {
    double m = Parallel ? k::max_cosine(q, rows) : k::serial::max_cosine(q, rows);
    benchmark::DoNotOptimize(m);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <bool Parallel>
void BM_Pairwise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 64;
  const auto vecs = random_floats(n * dim, 5);
  auto score = [&](std::size_t i, std::size_t j) {
    return k::cosine(std::span<const float>(vecs).subspan(i * dim, dim),
                     std::span<const float>(vecs).subspan(j * dim, dim));
  };
  for (auto _ : state) {
    auto m = Parallel ? k::pairwise(n, score) : k::serial::pairwise(n, score);
    benchmark::DoNotOptimize(m.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * (n - 1)));
}

}  // namespace

BENCHMARK(BM_Matvec<false>)->Name("matvec/serial")->RangeMultiplier(4)->Range(64, 16384);
BENCHMARK(BM_Matvec<true>)->Name("matvec/openmp")->RangeMultiplier(4)->Range(64, 16384);
BENCHMARK(BM_MaxCosine<false>)->Name("max_cosine/serial")->RangeMultiplier(8)->Range(64, 32768);
BENCHMARK(BM_MaxCosine<true>)->Name("max_cosine/openmp")->RangeMultiplier(8)->Range(64, 32768);
BENCHMARK(BM_Pairwise<false>)->Name("pairwise/serial")->Arg(15)->Arg(64)->Arg(256);
BENCHMARK(BM_Pairwise<true>)->Name("pairwise/openmp")->Arg(15)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
