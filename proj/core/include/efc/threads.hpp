#pragma once

namespace efc {

// Worker-thread cap for data-parallel regions (GEMM rows, per-image loops).
// Resolution order: explicit set_max_threads() > EF_THREADS env > hardware.
// Parallel loops assign each output element to exactly one thread, so forward
// passes are bit-identical for any thread count; only whole-batch reductions
// (loss sums, per-channel stats) may reassociate, and those run single-threaded.
int max_threads();
void set_max_threads(int n);

// Forces single-threaded execution for the lifetime of the guard.
// Latency measurement uses this: timed regions must not be parallel.
class SingleThreadGuard {
public:
    SingleThreadGuard();
    ~SingleThreadGuard();
    SingleThreadGuard(const SingleThreadGuard&) = delete;
    SingleThreadGuard& operator=(const SingleThreadGuard&) = delete;

private:
    int saved_;
};

}  // namespace efc
