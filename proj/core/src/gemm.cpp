#include "efc/gemm.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "efc/parallel.hpp"
#include "efc/threads.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define EFC_GEMM_AVX2 1
#endif

#ifdef _OPENMP
#include <omp.h>
#endif

namespace efc {
namespace {

constexpr int64_t kMr = 6;   // rows per micro-tile
constexpr int64_t kNr = 16;  // cols per micro-tile (two 8-lane vectors)

#ifdef EFC_GEMM_AVX2

// 6x16 register-blocked kernel: accumulators stay in ymm across the k loop.
template <int MR>
inline void kernel_mx16(const float* a, const float* b, float* c, int64_t k, int64_t lda,
                        int64_t ldb, int64_t ldc, bool accumulate) {
    __m256 acc[MR][2];
    for (int r = 0; r < MR; ++r) {
        if (accumulate) {
            acc[r][0] = _mm256_loadu_ps(c + r * ldc);
            acc[r][1] = _mm256_loadu_ps(c + r * ldc + 8);
        } else {
            acc[r][0] = _mm256_setzero_ps();
            acc[r][1] = _mm256_setzero_ps();
        }
    }
    for (int64_t p = 0; p < k; ++p) {
        const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
        const __m256 b1 = _mm256_loadu_ps(b + p * ldb + 8);
        for (int r = 0; r < MR; ++r) {
            const __m256 av = _mm256_set1_ps(a[r * lda + p]);
            acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
        }
    }
    for (int r = 0; r < MR; ++r) {
        _mm256_storeu_ps(c + r * ldc, acc[r][0]);
        _mm256_storeu_ps(c + r * ldc + 8, acc[r][1]);
    }
}

inline void kernel_dispatch(const float* a, const float* b, float* c, int64_t mr, int64_t k,
                            int64_t lda, int64_t ldb, int64_t ldc, bool accumulate) {
    switch (mr) {
        case 6: kernel_mx16<6>(a, b, c, k, lda, ldb, ldc, accumulate); break;
        case 5: kernel_mx16<5>(a, b, c, k, lda, ldb, ldc, accumulate); break;
        case 4: kernel_mx16<4>(a, b, c, k, lda, ldb, ldc, accumulate); break;
        case 3: kernel_mx16<3>(a, b, c, k, lda, ldb, ldc, accumulate); break;
        case 2: kernel_mx16<2>(a, b, c, k, lda, ldb, ldc, accumulate); break;
        default: kernel_mx16<1>(a, b, c, k, lda, ldb, ldc, accumulate); break;
    }
}

#endif  // EFC_GEMM_AVX2

// Scalar path; also handles the N%16 tail of the vector path. std::fma keeps
// the contraction identical to the vector lanes.
inline void scalar_block(const float* a, const float* b, float* c, int64_t mr, int64_t k,
                         int64_t nr, int64_t lda, int64_t ldb, int64_t ldc, bool accumulate) {
    for (int64_t r = 0; r < mr; ++r) {
        for (int64_t j = 0; j < nr; ++j) {
            float sum = accumulate ? c[r * ldc + j] : 0.0f;
            const float* ar = a + r * lda;
            const float* bj = b + j;
            for (int64_t p = 0; p < k; ++p) {
                sum = std::fma(ar[p], bj[p * ldb], sum);
            }
            c[r * ldc + j] = sum;
        }
    }
}

}  // namespace

void sgemm(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
           bool accumulate) {
    if (m <= 0 || n <= 0) return;
    if (k <= 0) {
        if (!accumulate) std::fill(c, c + m * n, 0.0f);
        return;
    }

    // One task per 16-column panel; the panel of B is packed contiguously once
    // and reused across all row blocks. The N%16 tail runs the scalar path.
    const int64_t npanels = (n + kNr - 1) / kNr;
    const int nt = static_cast<int>(std::min<int64_t>(max_threads(), npanels));
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
#endif
    for (int64_t panel = 0; panel < npanels; ++panel) {
        const int64_t j0 = panel * kNr;
        const int64_t nr = std::min(kNr, n - j0);
#ifdef EFC_GEMM_AVX2
        if (nr == kNr) {
            thread_local std::vector<float> packed;
            packed.resize(static_cast<size_t>(k) * kNr);
            float* bp = packed.data();
            for (int64_t p = 0; p < k; ++p) {
                const float* src = b + p * n + j0;
                float* dst = bp + p * kNr;
                _mm256_storeu_ps(dst, _mm256_loadu_ps(src));
                _mm256_storeu_ps(dst + 8, _mm256_loadu_ps(src + 8));
            }
            for (int64_t i0 = 0; i0 < m; i0 += kMr) {
                kernel_dispatch(a + i0 * k, bp, c + i0 * n + j0, std::min(kMr, m - i0), k, k, kNr,
                                n, accumulate);
            }
            continue;
        }
#endif
        for (int64_t i0 = 0; i0 < m; i0 += kMr) {
            scalar_block(a + i0 * k, b + j0, c + i0 * n + j0, std::min(kMr, m - i0), k, nr, k, n,
                         n, accumulate);
        }
    }
}

void transpose(const float* src, float* dst, int64_t m, int64_t n) {
    constexpr int64_t kBlk = 32;
    const int nt = max_threads();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && m * n > (1 << 16))
#endif
    for (int64_t i0 = 0; i0 < m; i0 += kBlk) {
        const int64_t im = std::min(i0 + kBlk, m);
        for (int64_t j0 = 0; j0 < n; j0 += kBlk) {
            const int64_t jm = std::min(j0 + kBlk, n);
            for (int64_t i = i0; i < im; ++i) {
                for (int64_t j = j0; j < jm; ++j) {
                    dst[j * m + i] = src[i * n + j];
                }
            }
        }
    }
}

}  // namespace efc
