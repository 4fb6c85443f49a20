#include <benchmark/benchmark.h>

#include "efc/prior.hpp"
#include "efc/range_coder.hpp"
#include "efc/rng.hpp"

namespace {

using namespace efc;

struct CodecFixture {
    CdfTableSet tables;
    std::vector<int32_t> symbols, channels;
    FactorizedPrior prior = FactorizedPrior::deep(48, 3);

    explicit CodecFixture(int64_t count) {
        prior.compute_support();
        tables = freeze(prior);
        Rng rng(17);
        for (int64_t i = 0; i < count; ++i) {
            const int32_t c = int32_t(i % 48);
            const auto& t = tables.tables[size_t(c)];
            channels.push_back(c);
            symbols.push_back(t.y_min + int32_t(rng.next_u32() % uint32_t(t.symbols())));
        }
    }
};

void BM_range_encode(benchmark::State& state) {
    CodecFixture f(state.range(0));
    for (auto _ : state) {
        auto bytes = range_encode(f.symbols, f.tables, f.channels);
        benchmark::DoNotOptimize(bytes.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * state.range(0));
}

void BM_range_roundtrip(benchmark::State& state) {
    CodecFixture f(state.range(0));
    const auto bytes = range_encode(f.symbols, f.tables, f.channels);
    for (auto _ : state) {
        auto back = range_decode(bytes, state.range(0), f.tables, f.channels);
        benchmark::DoNotOptimize(back.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * state.range(0));
}

void BM_rate_bits(benchmark::State& state) {
    FactorizedPrior prior = FactorizedPrior::deep(48, 3);
    Rng rng(5);
    Tensor y({state.range(0), 48, 4, 4});
    for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = 3.0f * rng.normal();
    for (auto _ : state) {
        Tensor bits = rate_bits(prior, y);
        benchmark::DoNotOptimize(bits.data());
    }
}

}  // namespace

BENCHMARK(BM_range_encode)->Arg(768)->Arg(76800)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_range_roundtrip)->Arg(768)->Arg(76800)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_rate_bits)->Arg(1)->Arg(128)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
