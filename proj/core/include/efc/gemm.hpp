#pragma once

#include <cstdint>

namespace efc {

// C[M,N] = A[M,K] * B[K,N] (row-major, f32). With accumulate, adds into C.
// Each output element is accumulated over k in ascending order by exactly one
// thread, so results are bit-identical for any thread count and independent
// of how columns are batched together.
void sgemm(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
           bool accumulate = false);

// dst[N,M] = src[M,N] (row-major), blocked.
void transpose(const float* src, float* dst, int64_t m, int64_t n);

}  // namespace efc
