#pragma once

#include <algorithm>
#include <cstdint>

#include "efc/threads.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace efc {

// Splits [0,n) into one contiguous chunk per thread and calls f(begin, end).
// Chunk boundaries depend only on n and the thread cap, never on scheduling,
// so any value written by exactly one index is deterministic.
template <typename F>
void parallel_for(int64_t n, F&& f) {
    if (n <= 0) return;
    const int nt = static_cast<int>(std::min<int64_t>(max_threads(), n));
    if (nt <= 1) {
        f(int64_t{0}, n);
        return;
    }
#ifdef _OPENMP
    const int64_t chunk = (n + nt - 1) / nt;
#pragma omp parallel num_threads(nt)
    {
        const int t = omp_get_thread_num();
        const int64_t b = t * chunk;
        const int64_t e = std::min(n, b + chunk);
        if (b < e) f(b, e);
    }
#else
    f(int64_t{0}, n);
#endif
}

}  // namespace efc
