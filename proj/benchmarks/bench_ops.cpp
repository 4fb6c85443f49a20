#include <benchmark/benchmark.h>

#include "efc/losses.hpp"
#include "efc/ops.hpp"
#include "efc/rng.hpp"

namespace {

using namespace efc;

Tensor randn(std::vector<int64_t> shape, uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal();
    return t;
}

void BM_conv3x3_fwd(benchmark::State& state) {
    const int64_t b = state.range(0);
    Tensor x = randn({b, 64, 8, 8}, 1);
    Tensor w = randn({64, 64, 3, 3}, 2);
    Tensor bias = randn({64}, 3);
    for (auto _ : state) {
        Tensor y = conv2d(x, w, bias, 1, 1);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * 2 * 9 * 64 * 64 * 64 * b);
}

void BM_conv3x3_train_step(benchmark::State& state) {
    const int64_t b = state.range(0);
    Tensor x = randn({b, 64, 8, 8}, 1);
    Tensor w = randn({64, 64, 3, 3}, 2);
    Tensor bias = randn({64}, 3);
    Tensor target = randn({b, 64, 8, 8}, 4);
    w.set_requires_grad(true);
    bias.set_requires_grad(true);
    for (auto _ : state) {
        w.zero_grad();
        bias.zero_grad();
        Tape tape;
        Tensor loss = mse(conv2d(x, w, bias, 1, 1, &tape), target, &tape);
        tape.backward(loss);
        benchmark::DoNotOptimize(w.grad());
    }
}

void BM_gelu(benchmark::State& state) {
    Tensor x = randn({state.range(0)}, 7);
    for (auto _ : state) {
        Tensor y = gelu(x);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * state.range(0));
}

void BM_gdn(benchmark::State& state) {
    Tensor x = randn({state.range(0), 64, 16, 16}, 8);
    Tensor beta = Tensor::full({64}, 1.0f);
    Tensor gamma = Tensor::full({64, 64}, 0.01f);
    for (auto _ : state) {
        Tensor y = gdn(x, beta, gamma);
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

BENCHMARK(BM_conv3x3_fwd)->Arg(1)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv3x3_train_step)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gelu)->Arg(1 << 16)->Arg(1 << 21)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gdn)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
