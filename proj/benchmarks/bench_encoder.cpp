#include <benchmark/benchmark.h>

#include "efc/codec.hpp"
#include "efc/rng.hpp"
#include "efc/threads.hpp"

namespace {

using namespace efc;

// the complexity knob: encode cost as a function of N (and the baseline)
void BM_encode_image(benchmark::State& state) {
    ArchConfig arch;
    if (state.range(0) < 0) {
        arch.encoder_kind = EncoderKind::baseline5x5;
        arch.patch_size = 4;
        arch.num_res_blocks = 0;
    } else {
        arch.num_res_blocks = int(state.range(0));
    }
    ModelBundle b = build_bundle(arch, 11);
    b.prior.compute_support();
    b.tables = freeze(b.prior);
    refresh_digest(b);

    Rng rng(3);
    Tensor img({3, 32, 32});
    for (int64_t i = 0; i < img.numel(); ++i) img.data()[i] = rng.normal();

    SingleThreadGuard single;  // mirrors the latency-harness conditions
    for (auto _ : state) {
        auto res = compress(b, img);
        benchmark::DoNotOptimize(res.cf.payload.data());
    }
}

}  // namespace

// -1 encodes the baseline5x5 configuration
BENCHMARK(BM_encode_image)->Arg(0)->Arg(4)->Arg(8)->Arg(-1)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
