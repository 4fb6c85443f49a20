#include "efc/ops.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "efc/gemm.hpp"
#include "efc/parallel.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define EFC_OPS_AVX2 1
#endif

namespace efc {
namespace {

constexpr float kInvSqrt2 = 0.70710678118654752440f;
constexpr float kInvSqrt2Pi = 0.39894228040143267794f;

// transient per-call scratch, reused to avoid large-allocation churn
float* scratch(int slot, size_t n) {
    static thread_local std::vector<float> pools[4];
    auto& v = pools[slot];
    if (v.size() < n) v.resize(n);
    return v.data();
}

#ifdef EFC_OPS_AVX2

// Cephes-style exp on 8 lanes; |rel err| < 2e-7 over the gelu-relevant range.
inline __m256 exp_ps(__m256 x) {
    const __m256 hi = _mm256_set1_ps(88.3762626647949f);
    const __m256 lo = _mm256_set1_ps(-88.3762626647949f);
    const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
    const __m256 c1 = _mm256_set1_ps(0.693359375f);
    const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
    const __m256 half = _mm256_set1_ps(0.5f);
    const __m256 one = _mm256_set1_ps(1.0f);

    x = _mm256_min_ps(x, hi);
    x = _mm256_max_ps(x, lo);
    __m256 fx = _mm256_fmadd_ps(x, log2e, half);
    fx = _mm256_floor_ps(fx);
    x = _mm256_fnmadd_ps(fx, c1, x);
    x = _mm256_fnmadd_ps(fx, c2, x);

    const __m256 z = _mm256_mul_ps(x, x);
    __m256 y = _mm256_set1_ps(1.9875691500e-4f);
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
    y = _mm256_fmadd_ps(y, x, half);
    y = _mm256_fmadd_ps(y, z, x);
    y = _mm256_add_ps(y, one);

    const __m256i emm0 =
        _mm256_slli_epi32(_mm256_add_epi32(_mm256_cvttps_epi32(fx), _mm256_set1_epi32(0x7f)), 23);
    return _mm256_mul_ps(y, _mm256_castsi256_ps(emm0));
}

// Abramowitz-Stegun 7.1.26 on 8 lanes; |abs err| <= 1.5e-7.
inline __m256 erf_ps(__m256 x) {
    const __m256 sign_mask = _mm256_set1_ps(-0.0f);
    const __m256 sign = _mm256_and_ps(x, sign_mask);
    const __m256 ax = _mm256_andnot_ps(sign_mask, x);

    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 t = _mm256_div_ps(one, _mm256_fmadd_ps(_mm256_set1_ps(0.3275911f), ax, one));
    __m256 y = _mm256_set1_ps(1.061405429f);
    y = _mm256_fmadd_ps(y, t, _mm256_set1_ps(-1.453152027f));
    y = _mm256_fmadd_ps(y, t, _mm256_set1_ps(1.421413741f));
    y = _mm256_fmadd_ps(y, t, _mm256_set1_ps(-0.284496736f));
    y = _mm256_fmadd_ps(y, t, _mm256_set1_ps(0.254829592f));
    y = _mm256_mul_ps(y, t);
    const __m256 e = exp_ps(_mm256_sub_ps(_mm256_setzero_ps(), _mm256_mul_ps(ax, ax)));
    const __m256 r = _mm256_fnmadd_ps(y, e, one);
    return _mm256_or_ps(r, sign);
}

// scalar fallbacks route through the same 8-lane kernels so an element's
// value never depends on which loop (body or tail) computed it
inline float erf_one(float x) {
    alignas(32) float buf[8] = {x};
    _mm256_store_ps(buf, erf_ps(_mm256_load_ps(buf)));
    return buf[0];
}

inline float exp_one(float x) {
    alignas(32) float buf[8] = {x};
    _mm256_store_ps(buf, exp_ps(_mm256_load_ps(buf)));
    return buf[0];
}

#endif  // EFC_OPS_AVX2

struct ConvDims {
    int64_t batch, cin, h, w;
    int64_t cout, k;
    int64_t stride, pad;
    int64_t ho, wo;
    bool batched;
};

ConvDims conv_dims(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                   int padding) {
    if (input.ndim() != 3 && input.ndim() != 4)
        throw config_error("conv2d input must be (C,H,W) or (B,C,H,W), got " + shape_str(input.shape()));
    if (weight.ndim() != 4 || weight.dim(2) != weight.dim(3))
        throw config_error("conv2d weight must be (C_out,C_in,k,k), got " + shape_str(weight.shape()));
    if (stride < 1 || padding < 0 || weight.dim(2) < 1)
        throw config_error("conv2d requires k>=1, stride>=1, padding>=0");

    ConvDims d;
    d.batched = input.ndim() == 4;
    d.batch = d.batched ? input.dim(0) : 1;
    d.cin = input.dim(d.batched ? 1 : 0);
    d.h = input.dim(d.batched ? 2 : 1);
    d.w = input.dim(d.batched ? 3 : 2);
    d.cout = weight.dim(0);
    d.k = weight.dim(2);
    d.stride = stride;
    d.pad = padding;
    if (weight.dim(1) != d.cin)
        throw config_error("conv2d channel mismatch: input C=" + std::to_string(d.cin) + " weight C_in=" +
                           std::to_string(weight.dim(1)));
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != d.cout))
        throw config_error("conv2d bias must be (C_out)");
    if (d.h + 2 * d.pad < d.k || d.w + 2 * d.pad < d.k)
        throw config_error("conv2d kernel larger than padded input");
    d.ho = (d.h + 2 * d.pad - d.k) / d.stride + 1;
    d.wo = (d.w + 2 * d.pad - d.k) / d.stride + 1;
    return d;
}

// valid output range [lo,hi) so that 0 <= ow*stride + kk - pad < extent
inline void valid_range(int64_t kk, int64_t stride, int64_t pad, int64_t extent, int64_t out,
                        int64_t& lo, int64_t& hi) {
    int64_t need = pad - kk;  // ow*stride >= need
    lo = need <= 0 ? 0 : (need + stride - 1) / stride;
    const int64_t last = extent - 1 - kk + pad;  // ow*stride <= last
    hi = last < 0 ? 0 : std::min(out, last / stride + 1);
    if (lo > hi) lo = hi;
}

// Col[(c*k+kh)*k+kw][(b*ho+oh)*wo+ow], zero outside the padded input.
void im2col(const float* x, const ConvDims& d, float* col) {
    const int64_t cols = d.batch * d.ho * d.wo;
    const int64_t rows = d.cin * d.k * d.k;
    parallel_for(rows, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const int64_t c = r / (d.k * d.k);
            const int64_t kh = (r / d.k) % d.k;
            const int64_t kw = r % d.k;
            int64_t wlo, whi;
            valid_range(kw, d.stride, d.pad, d.w, d.wo, wlo, whi);
            float* dst = col + r * cols;
            for (int64_t b = 0; b < d.batch; ++b) {
                const float* img = x + (b * d.cin + c) * d.h * d.w;
                for (int64_t oh = 0; oh < d.ho; ++oh) {
                    const int64_t ih = oh * d.stride + kh - d.pad;
                    float* out = dst + (b * d.ho + oh) * d.wo;
                    if (ih < 0 || ih >= d.h) {
                        std::memset(out, 0, sizeof(float) * static_cast<size_t>(d.wo));
                        continue;
                    }
                    const float* row = img + ih * d.w;
                    for (int64_t ow = 0; ow < wlo; ++ow) out[ow] = 0.0f;
                    if (d.stride == 1) {
                        if (whi > wlo)
                            std::memcpy(out + wlo, row + wlo + kw - d.pad,
                                        sizeof(float) * static_cast<size_t>(whi - wlo));
                    } else {
                        for (int64_t ow = wlo; ow < whi; ++ow)
                            out[ow] = row[ow * d.stride + kw - d.pad];
                    }
                    for (int64_t ow = whi; ow < d.wo; ++ow) out[ow] = 0.0f;
                }
            }
        }
    });
}

void col2im_add(const float* dcol, const ConvDims& d, float* dx) {
    const int64_t cols = d.batch * d.ho * d.wo;
    parallel_for(d.batch, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b) {
            for (int64_t r = 0; r < d.cin * d.k * d.k; ++r) {
                const int64_t c = r / (d.k * d.k);
                const int64_t kh = (r / d.k) % d.k;
                const int64_t kw = r % d.k;
                int64_t wlo, whi;
                valid_range(kw, d.stride, d.pad, d.w, d.wo, wlo, whi);
                const float* src = dcol + r * cols;
                float* img = dx + (b * d.cin + c) * d.h * d.w;
                for (int64_t oh = 0; oh < d.ho; ++oh) {
                    const int64_t ih = oh * d.stride + kh - d.pad;
                    if (ih < 0 || ih >= d.h) continue;
                    const float* in = src + (b * d.ho + oh) * d.wo;
                    float* row = img + ih * d.w;
                    if (d.stride == 1) {
                        float* dst = row + wlo + kw - d.pad;
                        for (int64_t ow = wlo; ow < whi; ++ow) dst[ow - wlo] += in[ow];
                    } else {
                        for (int64_t ow = wlo; ow < whi; ++ow)
                            row[ow * d.stride + kw - d.pad] += in[ow];
                    }
                }
            }
        }
    });
}

// (C_out, B*HW) -> (B, C_out, HW), optional bias broadcast per channel.
void scatter_channel_major(const float* src, float* dst, int64_t batch, int64_t ch, int64_t hw,
                           const float* bias) {
    parallel_for(batch, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b) {
            for (int64_t c = 0; c < ch; ++c) {
                const float* s = src + c * batch * hw + b * hw;
                float* o = dst + (b * ch + c) * hw;
                if (bias) {
                    const float bv = bias[c];
                    for (int64_t i = 0; i < hw; ++i) o[i] = s[i] + bv;
                } else {
                    std::memcpy(o, s, sizeof(float) * static_cast<size_t>(hw));
                }
            }
        }
    });
}

// (B, C, HW) -> (C, B*HW)
void gather_channel_major(const float* src, float* dst, int64_t batch, int64_t ch, int64_t hw) {
    parallel_for(batch, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b) {
            for (int64_t c = 0; c < ch; ++c) {
                std::memcpy(dst + c * batch * hw + b * hw, src + (b * ch + c) * hw,
                            sizeof(float) * static_cast<size_t>(hw));
            }
        }
    });
}

bool any_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

}  // namespace

float pairwise_sum(const float* p, int64_t n) {
    if (n <= 16) {
        float s = 0.0f;
        for (int64_t i = 0; i < n; ++i) s += p[i];
        return s;
    }
    const int64_t half = n / 2;
    return pairwise_sum(p, half) + pairwise_sum(p + half, n - half);
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding, Tape* tape) {
    const ConvDims d = conv_dims(input, weight, bias, stride, padding);
    const int64_t cols = d.batch * d.ho * d.wo;
    const int64_t krows = d.cin * d.k * d.k;

    // uninitialized scratch: im2col and sgemm write every element
    auto col = std::shared_ptr<float[]>(new float[static_cast<size_t>(krows * cols)]);
    im2col(input.data(), d, col.get());

    float* tmp = scratch(0, static_cast<size_t>(d.cout * cols));
    sgemm(weight.data(), col.get(), tmp, d.cout, krows, cols);

    Tensor out = d.batched ? Tensor({d.batch, d.cout, d.ho, d.wo}) : Tensor({d.cout, d.ho, d.wo});
    scatter_channel_major(tmp, out.data(), d.batch, d.cout, d.ho * d.wo,
                          bias.defined() ? bias.data() : nullptr);
    out.ensure_finite("conv2d");

    if (tape && any_grad({&input, &weight, &bias})) {
        out.set_requires_grad(true);
        Tensor x = input, w = weight, b = bias, y = out;
        tape->record([x, w, b, y, col, d]() mutable {
            const int64_t cols = d.batch * d.ho * d.wo;
            const int64_t krows = d.cin * d.k * d.k;
            float* dy_cm = scratch(0, static_cast<size_t>(d.cout * cols));
            gather_channel_major(y.grad(), dy_cm, d.batch, d.cout, d.ho * d.wo);

            if (w.requires_grad()) {
                // dW = dY * Col^T; transposing Col keeps the GEMM panel-packed
                float* col_t = scratch(3, static_cast<size_t>(cols * krows));
                transpose(col.get(), col_t, krows, cols);
                sgemm(dy_cm, col_t, w.grad(), d.cout, cols, krows, true);
            }
            if (b.defined() && b.requires_grad()) {
                float* db = b.grad();
                parallel_for(d.cout, [&](int64_t c0, int64_t c1) {
                    for (int64_t c = c0; c < c1; ++c) db[c] += pairwise_sum(dy_cm + c * cols, cols);
                });
            }
            if (x.requires_grad()) {
                float* w_t = scratch(1, static_cast<size_t>(krows * d.cout));
                transpose(w.data(), w_t, d.cout, krows);
                float* dcol = scratch(2, static_cast<size_t>(krows * cols));
                sgemm(w_t, dy_cm, dcol, krows, d.cout, cols);
                col2im_add(dcol, d, x.grad());
            }
        });
    }
    return out;
}

Tensor gelu(const Tensor& x, Tape* tape) {
    const int64_t n = x.numel();
    Tensor out(x.shape());
    auto cdf = std::make_shared<std::vector<float>>(static_cast<size_t>(n));
    {
        const float* xp = x.data();
        float* yp = out.data();
        float* cp = cdf->data();
        parallel_for(n, [&](int64_t i0, int64_t i1) {
            int64_t i = i0;
#ifdef EFC_OPS_AVX2
            const __m256 half = _mm256_set1_ps(0.5f);
            const __m256 inv_sqrt2 = _mm256_set1_ps(kInvSqrt2);
            for (; i + 8 <= i1; i += 8) {
                const __m256 xv = _mm256_loadu_ps(xp + i);
                const __m256 c = _mm256_mul_ps(
                    half, _mm256_add_ps(_mm256_set1_ps(1.0f),
                                        erf_ps(_mm256_mul_ps(xv, inv_sqrt2))));
                _mm256_storeu_ps(cp + i, c);
                _mm256_storeu_ps(yp + i, _mm256_mul_ps(xv, c));
            }
#endif
            for (; i < i1; ++i) {
#ifdef EFC_OPS_AVX2
                const float c = 0.5f * (1.0f + erf_one(xp[i] * kInvSqrt2));
#else
                const float c = 0.5f * (1.0f + std::erf(xp[i] * kInvSqrt2));
#endif
                cp[i] = c;
                yp[i] = xp[i] * c;
            }
        });
    }
    out.ensure_finite("gelu");

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor xc = x, y = out;
        tape->record([xc, y, cdf, n]() mutable {
            const float* xp = xc.data();
            const float* gy = y.grad();
            const float* cp = cdf->data();
            float* gx = xc.grad();
            parallel_for(n, [&](int64_t i0, int64_t i1) {
                int64_t i = i0;
#ifdef EFC_OPS_AVX2
                const __m256 mhalf = _mm256_set1_ps(-0.5f);
                const __m256 inv_sqrt2pi = _mm256_set1_ps(kInvSqrt2Pi);
                for (; i + 8 <= i1; i += 8) {
                    const __m256 xv = _mm256_loadu_ps(xp + i);
                    const __m256 pdf = _mm256_mul_ps(
                        inv_sqrt2pi, exp_ps(_mm256_mul_ps(mhalf, _mm256_mul_ps(xv, xv))));
                    const __m256 d = _mm256_fmadd_ps(xv, pdf, _mm256_loadu_ps(cp + i));
                    _mm256_storeu_ps(gx + i,
                                     _mm256_fmadd_ps(_mm256_loadu_ps(gy + i), d,
                                                     _mm256_loadu_ps(gx + i)));
                }
#endif
                for (; i < i1; ++i) {
#ifdef EFC_OPS_AVX2
                    const float pdf = kInvSqrt2Pi * exp_one(-0.5f * xp[i] * xp[i]);
#else
                    const float pdf = kInvSqrt2Pi * std::exp(-0.5f * xp[i] * xp[i]);
#endif
                    gx[i] += gy[i] * (cp[i] + xp[i] * pdf);
                }
            });
        });
    }
    return out;
}

Tensor gdn(const Tensor& x, const Tensor& beta, const Tensor& gamma, Tape* tape) {
    if (x.ndim() != 3 && x.ndim() != 4)
        throw config_error("gdn input must be (C,H,W) or (B,C,H,W)");
    const bool batched = x.ndim() == 4;
    const int64_t batch = batched ? x.dim(0) : 1;
    const int64_t ch = x.dim(batched ? 1 : 0);
    const int64_t hw = x.dim(batched ? 2 : 1) * x.dim(batched ? 3 : 2);
    if (beta.ndim() != 1 || beta.dim(0) != ch) throw config_error("gdn beta must be (C)");
    if (gamma.ndim() != 2 || gamma.dim(0) != ch || gamma.dim(1) != ch)
        throw config_error("gdn gamma must be (C,C)");
    for (int64_t i = 0; i < ch; ++i) {
        if (!(beta.data()[i] > 0.0f)) throw config_error("gdn beta must be > 0 elementwise");
    }
    for (int64_t i = 0; i < ch * ch; ++i) {
        if (gamma.data()[i] < 0.0f) throw config_error("gdn gamma must be >= 0 elementwise");
    }

    Tensor out(x.shape());
    // inverse sqrt of the denominator, cached for backward
    auto rden = std::make_shared<std::vector<float>>(static_cast<size_t>(batch * ch * hw));
    std::atomic<bool> bad_den{false};
    {
        const float* xp = x.data();
        const float* bp = beta.data();
        const float* gp = gamma.data();
        float* yp = out.data();
        float* rp = rden->data();
        parallel_for(batch * hw, [&](int64_t l0, int64_t l1) {
            std::vector<float> sq(static_cast<size_t>(ch));
            for (int64_t l = l0; l < l1; ++l) {
                const int64_t b = l / hw;
                const int64_t loc = l % hw;
                const float* xi = xp + b * ch * hw + loc;
                for (int64_t j = 0; j < ch; ++j) {
                    const float v = xi[j * hw];
                    sq[static_cast<size_t>(j)] = v * v;
                }
                for (int64_t i = 0; i < ch; ++i) {
                    const float* grow = gp + i * ch;
                    float den = bp[i];
                    for (int64_t j = 0; j < ch; ++j) den += grow[j] * sq[static_cast<size_t>(j)];
                    if (!(den > 0.0f)) {
                        bad_den.store(true, std::memory_order_relaxed);
                        den = 1.0f;
                    }
                    const float r = 1.0f / std::sqrt(den);
                    rp[(b * ch + i) * hw + loc] = r;
                    yp[(b * ch + i) * hw + loc] = xi[i * hw] * r;
                }
            }
        });
    }
    if (bad_den.load()) throw numeric_error("gdn: non-positive denominator");
    out.ensure_finite("gdn");

    if (tape && any_grad({&x, &beta, &gamma})) {
        out.set_requires_grad(true);
        Tensor xc = x, bc = beta, gc = gamma, y = out;
        tape->record([xc, bc, gc, y, rden, batch, ch, hw]() mutable {
            const float* xp = xc.data();
            const float* gp = gc.data();
            const float* gy = y.grad();
            const float* rp = rden->data();
            const bool need_dx = xc.requires_grad();
            const bool need_db = bc.requires_grad();
            const bool need_dg = gc.requires_grad();

            // per-image partials so the b-reduction order is fixed
            std::vector<float> db_part(need_db ? static_cast<size_t>(batch * ch) : 0, 0.0f);
            std::vector<float> dg_part(need_dg ? static_cast<size_t>(batch * ch * ch) : 0, 0.0f);

            parallel_for(batch, [&](int64_t b0, int64_t b1) {
                std::vector<float> sq(static_cast<size_t>(ch));
                std::vector<float> s(static_cast<size_t>(ch));
                for (int64_t b = b0; b < b1; ++b) {
                    float* dbp = need_db ? db_part.data() + b * ch : nullptr;
                    float* dgp = need_dg ? dg_part.data() + b * ch * ch : nullptr;
                    for (int64_t loc = 0; loc < hw; ++loc) {
                        const float* xi = xp + b * ch * hw + loc;
                        const float* ri = rp + b * ch * hw + loc;
                        const float* gi = gy + b * ch * hw + loc;
                        for (int64_t j = 0; j < ch; ++j) {
                            const float v = xi[j * hw];
                            sq[static_cast<size_t>(j)] = v * v;
                        }
                        // s_i = g_i * x_i * r_i^3
                        for (int64_t i = 0; i < ch; ++i) {
                            const float r = ri[i * hw];
                            s[static_cast<size_t>(i)] = gi[i * hw] * xi[i * hw] * r * r * r;
                        }
                        if (need_dx) {
                            float* gx = xc.grad() + b * ch * hw + loc;
                            for (int64_t m = 0; m < ch; ++m) {
                                float acc = 0.0f;
                                for (int64_t i = 0; i < ch; ++i)
                                    acc += s[static_cast<size_t>(i)] * gp[i * ch + m];
                                gx[m * hw] += gi[m * hw] * ri[m * hw] - xi[m * hw] * acc;
                            }
                        }
                        if (need_db) {
                            for (int64_t i = 0; i < ch; ++i) dbp[i] += -0.5f * s[static_cast<size_t>(i)];
                        }
                        if (need_dg) {
                            for (int64_t i = 0; i < ch; ++i) {
                                const float si = -0.5f * s[static_cast<size_t>(i)];
                                float* row = dgp + i * ch;
                                for (int64_t j = 0; j < ch; ++j) row[j] += si * sq[static_cast<size_t>(j)];
                            }
                        }
                    }
                }
            });
            if (need_db) {
                float* db = bc.grad();
                for (int64_t b = 0; b < batch; ++b)
                    for (int64_t i = 0; i < ch; ++i) db[i] += db_part[static_cast<size_t>(b * ch + i)];
            }
            if (need_dg) {
                float* dg = gc.grad();
                for (int64_t b = 0; b < batch; ++b)
                    for (int64_t i = 0; i < ch * ch; ++i)
                        dg[i] += dg_part[static_cast<size_t>(b * ch * ch + i)];
            }
        });
    }
    return out;
}

Tensor upsample2x_nearest(const Tensor& x, Tape* tape) {
    if (x.ndim() != 3 && x.ndim() != 4)
        throw config_error("upsample2x_nearest input must be (C,H,W) or (B,C,H,W)");
    const bool batched = x.ndim() == 4;
    const int64_t batch = batched ? x.dim(0) : 1;
    const int64_t ch = x.dim(batched ? 1 : 0);
    const int64_t h = x.dim(batched ? 2 : 1);
    const int64_t w = x.dim(batched ? 3 : 2);

    Tensor out = batched ? Tensor({batch, ch, 2 * h, 2 * w}) : Tensor({ch, 2 * h, 2 * w});
    {
        const float* xp = x.data();
        float* yp = out.data();
        parallel_for(batch * ch, [&](int64_t p0, int64_t p1) {
            for (int64_t p = p0; p < p1; ++p) {
                const float* src = xp + p * h * w;
                float* dst = yp + p * 4 * h * w;
                for (int64_t i = 0; i < h; ++i) {
                    float* r0 = dst + (2 * i) * 2 * w;
                    float* r1 = r0 + 2 * w;
                    for (int64_t j = 0; j < w; ++j) {
                        const float v = src[i * w + j];
                        r0[2 * j] = v;
                        r0[2 * j + 1] = v;
                        r1[2 * j] = v;
                        r1[2 * j + 1] = v;
                    }
                }
            }
        });
    }

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor xc = x, y = out;
        tape->record([xc, y, batch, ch, h, w]() mutable {
            const float* gy = y.grad();
            float* gx = xc.grad();
            parallel_for(batch * ch, [&](int64_t p0, int64_t p1) {
                for (int64_t p = p0; p < p1; ++p) {
                    const float* src = gy + p * 4 * h * w;
                    float* dst = gx + p * h * w;
                    for (int64_t i = 0; i < h; ++i) {
                        const float* r0 = src + (2 * i) * 2 * w;
                        const float* r1 = r0 + 2 * w;
                        for (int64_t j = 0; j < w; ++j) {
                            dst[i * w + j] += r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1];
                        }
                    }
                }
            });
        });
    }
    return out;
}

Tensor dense_head(const Tensor& feature, const Tensor& weight, const Tensor& bias, Tape* tape) {
    if (feature.ndim() != 3 && feature.ndim() != 4)
        throw config_error("dense_head feature must be (C,H,W) or (B,C,H,W)");
    const bool batched = feature.ndim() == 4;
    const int64_t batch = batched ? feature.dim(0) : 1;
    const int64_t ch = feature.dim(batched ? 1 : 0);
    const int64_t hw = feature.dim(batched ? 2 : 1) * feature.dim(batched ? 3 : 2);
    if (weight.ndim() != 2 || weight.dim(1) != ch)
        throw config_error("dense_head weight must be (K,C) with C=" + std::to_string(ch));
    const int64_t classes = weight.dim(0);
    if (bias.ndim() != 1 || bias.dim(0) != classes) throw config_error("dense_head bias must be (K)");

    auto pooled = std::make_shared<std::vector<float>>(static_cast<size_t>(batch * ch));
    {
        const float* fp = feature.data();
        float* pp = pooled->data();
        const float inv = 1.0f / static_cast<float>(hw);
        parallel_for(batch * ch, [&](int64_t p0, int64_t p1) {
            for (int64_t p = p0; p < p1; ++p) pp[p] = pairwise_sum(fp + p * hw, hw) * inv;
        });
    }

    Tensor out = batched ? Tensor({batch, classes}) : Tensor({classes});
    {
        const float* wp = weight.data();
        const float* bp = bias.data();
        float* op = out.data();
        for (int64_t b = 0; b < batch; ++b) {
            const float* pb = pooled->data() + b * ch;
            for (int64_t k = 0; k < classes; ++k) {
                float s = bp[k];
                const float* wr = wp + k * ch;
                for (int64_t c = 0; c < ch; ++c) s = std::fma(wr[c], pb[c], s);
                op[b * classes + k] = s;
            }
        }
    }
    out.ensure_finite("dense_head");

    if (tape && any_grad({&feature, &weight, &bias})) {
        out.set_requires_grad(true);
        Tensor f = feature, w = weight, b = bias, y = out;
        tape->record([f, w, b, y, pooled, batch, ch, hw, classes]() mutable {
            const float* gy = y.grad();
            if (w.requires_grad()) {
                float* gw = w.grad();
                for (int64_t bi = 0; bi < batch; ++bi) {
                    const float* pb = pooled->data() + bi * ch;
                    for (int64_t k = 0; k < classes; ++k) {
                        const float g = gy[bi * classes + k];
                        float* row = gw + k * ch;
                        for (int64_t c = 0; c < ch; ++c) row[c] += g * pb[c];
                    }
                }
            }
            if (b.requires_grad()) {
                float* gb = b.grad();
                for (int64_t bi = 0; bi < batch; ++bi)
                    for (int64_t k = 0; k < classes; ++k) gb[k] += gy[bi * classes + k];
            }
            if (f.requires_grad()) {
                const float inv = 1.0f / static_cast<float>(hw);
                float* gf = f.grad();
                const float* wp = w.data();
                parallel_for(batch, [&](int64_t b0, int64_t b1) {
                    for (int64_t bi = b0; bi < b1; ++bi) {
                        for (int64_t c = 0; c < ch; ++c) {
                            float acc = 0.0f;
                            for (int64_t k = 0; k < classes; ++k)
                                acc += gy[bi * classes + k] * wp[k * ch + c];
                            acc *= inv;
                            float* dst = gf + (bi * ch + c) * hw;
                            for (int64_t i = 0; i < hw; ++i) dst[i] += acc;
                        }
                    }
                });
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.shape() != b.shape())
        throw config_error("add shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int64_t n = a.numel();
    Tensor out(a.shape());
    {
        const float* ap = a.data();
        const float* bp = b.data();
        float* op = out.data();
        parallel_for(n, [&](int64_t i0, int64_t i1) {
            for (int64_t i = i0; i < i1; ++i) op[i] = ap[i] + bp[i];
        });
    }
    out.ensure_finite("add");

    if (tape && any_grad({&a, &b})) {
        out.set_requires_grad(true);
        Tensor ac = a, bc = b, y = out;
        tape->record([ac, bc, y, n]() mutable {
            const float* gy = y.grad();
            if (ac.requires_grad()) {
                float* ga = ac.grad();
                for (int64_t i = 0; i < n; ++i) ga[i] += gy[i];
            }
            if (bc.requires_grad()) {
                float* gb = bc.grad();
                for (int64_t i = 0; i < n; ++i) gb[i] += gy[i];
            }
        });
    }
    return out;
}

Tensor softplus(const Tensor& x, Tape* tape) {
    const int64_t n = x.numel();
    Tensor out(x.shape());
    {
        const float* xp = x.data();
        float* op = out.data();
        for (int64_t i = 0; i < n; ++i) {
            const float v = xp[i];
            op[i] = std::log1p(std::exp(-std::fabs(v))) + std::max(v, 0.0f);
        }
    }
    out.ensure_finite("softplus");

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor xc = x, y = out;
        tape->record([xc, y, n]() mutable {
            const float* xp = xc.data();
            const float* gy = y.grad();
            float* gx = xc.grad();
            for (int64_t i = 0; i < n; ++i) gx[i] += gy[i] / (1.0f + std::exp(-xp[i]));
        });
    }
    return out;
}

Tensor add_const(const Tensor& x, float c, Tape* tape) {
    const int64_t n = x.numel();
    Tensor out(x.shape());
    {
        const float* xp = x.data();
        float* op = out.data();
        for (int64_t i = 0; i < n; ++i) op[i] = xp[i] + c;
    }
    out.ensure_finite("add_const");

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor xc = x, y = out;
        tape->record([xc, y, n]() mutable {
            const float* gy = y.grad();
            float* gx = xc.grad();
            for (int64_t i = 0; i < n; ++i) gx[i] += gy[i];
        });
    }
    return out;
}

Tensor weighted_sum(const std::vector<std::pair<float, Tensor>>& terms, Tape* tape) {
    if (terms.empty()) throw config_error("weighted_sum needs at least one term");
    float total = 0.0f;
    bool rg = false;
    for (const auto& [c, t] : terms) {
        if (t.numel() != 1) throw config_error("weighted_sum terms must be scalar");
        total = std::fma(c, t.item(), total);
        rg = rg || t.requires_grad();
    }
    Tensor out = Tensor::scalar(total);
    out.ensure_finite("weighted_sum");

    if (tape && rg) {
        out.set_requires_grad(true);
        Tensor y = out;
        auto captured = terms;
        tape->record([captured, y]() mutable {
            const float g = y.grad()[0];
            for (auto& [c, t] : captured) {
                if (t.requires_grad()) t.grad()[0] += c * g;
            }
        });
    }
    return out;
}

Tensor softmax(const Tensor& logits) {
    if (logits.ndim() != 1 && logits.ndim() != 2)
        throw config_error("softmax expects (K) or (B,K) logits");
    const bool batched = logits.ndim() == 2;
    const int64_t batch = batched ? logits.dim(0) : 1;
    const int64_t classes = logits.dim(batched ? 1 : 0);
    Tensor out(logits.shape());
    for (int64_t b = 0; b < batch; ++b) {
        const float* lp = logits.data() + b * classes;
        float* op = out.data() + b * classes;
        float m = lp[0];
        for (int64_t k = 1; k < classes; ++k) m = std::max(m, lp[k]);
        float sum = 0.0f;
        for (int64_t k = 0; k < classes; ++k) {
            op[k] = std::exp(lp[k] - m);
            sum += op[k];
        }
        const float inv = 1.0f / sum;
        for (int64_t k = 0; k < classes; ++k) op[k] *= inv;
    }
    return out;
}

}  // namespace efc
