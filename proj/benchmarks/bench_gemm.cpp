#include <benchmark/benchmark.h>

#include <vector>

#include "efc/gemm.hpp"
#include "efc/rng.hpp"

namespace {

// shapes taken from the training hot path (batch 128)
void BM_sgemm(benchmark::State& state) {
    const int64_t m = state.range(0), k = state.range(1), n = state.range(2);
    efc::Rng rng(1);
    std::vector<float> a(size_t(m * k)), b(size_t(k * n)), c(size_t(m * n));
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    for (auto _ : state) {
        efc::sgemm(a.data(), b.data(), c.data(), m, k, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * 2 * m * k * n);
}

void BM_transpose(benchmark::State& state) {
    const int64_t m = state.range(0), n = state.range(1);
    std::vector<float> src(size_t(m * n), 1.0f), dst(size_t(m * n));
    for (auto _ : state) {
        efc::transpose(src.data(), dst.data(), m, n);
        benchmark::DoNotOptimize(dst.data());
    }
    state.SetBytesProcessed(int64_t(state.iterations()) * m * n * 4);
}

}  // namespace

BENCHMARK(BM_sgemm)->Args({64, 192, 2048})->Args({64, 576, 2048})->Args({64, 576, 8192})
    ->Args({576, 64, 8192})->Args({64, 576, 16})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_transpose)->Args({576, 8192})->Args({576, 2048})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
