#include "efc/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "efc/ops.hpp"
#include "efc/parallel.hpp"

namespace efc {
namespace {

inline float softplus(float x) {
    // stable: log1p(exp(-|x|)) + max(x, 0)
    return std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0f);
}

inline float softplus_inv(float y) { return std::log(std::expm1(y)); }

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// Dimensions of the chain: d[0]=1, d[1..]=filters, d[depth]=1.
std::vector<int64_t> chain_dims(const FactorizedPrior& p) {
    std::vector<int64_t> d;
    d.push_back(1);
    for (const auto& h : p.raw_h) d.push_back(h.dim(1));
    return d;
}

// Stored pre-activations per layer for one channel / one offset.
struct ChainScratch {
    std::vector<std::vector<float>> z;  // z[i]: n * d[i+1]
};

// out[n] = c(x[n] + offset) for channel c. Keeps z in `sc` when non-null.
void chain_forward(const FactorizedPrior& p, int64_t ch, const float* x, int64_t n, float offset,
                   ChainScratch* sc, float* out) {
    const auto dims = chain_dims(p);
    const int64_t depth = p.depth();
    std::vector<float> ubuf(static_cast<size_t>(n) * 3), zloc;
    for (int64_t e = 0; e < n; ++e) ubuf[static_cast<size_t>(e)] = x[e] + offset;
    int64_t din = 1;

    for (int64_t i = 0; i < depth; ++i) {
        const int64_t dout = dims[static_cast<size_t>(i + 1)];
        const float* hp = p.raw_h[static_cast<size_t>(i)].data() + ch * dout * din;
        const float* bp = p.raw_b[static_cast<size_t>(i)].data() + ch * dout;
        float sph[9];
        for (int64_t r = 0; r < dout * din; ++r) sph[r] = softplus(hp[r]);

        zloc.resize(static_cast<size_t>(n * dout));
        for (int64_t e = 0; e < n; ++e) {
            const float* u = ubuf.data() + e * din;
            float* z = zloc.data() + e * dout;
            for (int64_t r = 0; r < dout; ++r) {
                float acc = bp[r];
                const float* row = sph + r * din;
                for (int64_t cix = 0; cix < din; ++cix) acc += row[cix] * u[cix];
                z[r] = acc;
            }
        }
        if (sc) sc->z.push_back(zloc);

        if (i + 1 < depth) {
            const float* ap = p.raw_a[static_cast<size_t>(i)].data() + ch * dout;
            float av[3];
            for (int64_t r = 0; r < dout; ++r) av[r] = std::tanh(ap[r]);
            for (int64_t e = 0; e < n; ++e) {
                const float* z = zloc.data() + e * dout;
                float* u = ubuf.data() + e * dout;
                for (int64_t r = 0; r < dout; ++r) u[r] = z[r] + av[r] * std::tanh(z[r]);
            }
        } else {
            for (int64_t e = 0; e < n; ++e) out[e] = sigmoid(zloc[static_cast<size_t>(e)]);
        }
        din = dout;
    }
}

// Backpropagates dout (dL/d c-value, length n) through the chain of one
// channel. Adds into dx (when non-null) and into the raw parameter grads
// (when param_grads). Recomputes u_i from the stored z. Reads parameter
// values through the same tensor handles it writes grads to, so it stays
// valid even if the owning prior has gone away.
void chain_backward(int64_t ch, const float* x, int64_t n, float offset, const ChainScratch& sc,
                    const float* dout, float* dx, bool param_grads, std::vector<Tensor>& gh,
                    std::vector<Tensor>& gb, std::vector<Tensor>& ga) {
    const int64_t depth = static_cast<int64_t>(gh.size());
    std::vector<int64_t> dims;
    dims.push_back(1);
    for (const auto& h : gh) dims.push_back(h.dim(1));

    // u_i for every layer (recomputed forward)
    std::vector<std::vector<float>> u(static_cast<size_t>(depth));
    {
        std::vector<float> cur(static_cast<size_t>(n));
        for (int64_t e = 0; e < n; ++e) cur[static_cast<size_t>(e)] = x[e] + offset;
        u[0] = cur;
        for (int64_t i = 0; i + 1 < depth; ++i) {
            const int64_t dout_i = dims[static_cast<size_t>(i + 1)];
            const float* ap = ga[static_cast<size_t>(i)].data() + ch * dout_i;
            float av[3];
            for (int64_t r = 0; r < dout_i; ++r) av[r] = std::tanh(ap[r]);
            const auto& z = sc.z[static_cast<size_t>(i)];
            std::vector<float> nxt(static_cast<size_t>(n * dout_i));
            for (int64_t e = 0; e < n * dout_i; ++e) {
                const int64_t r = e % dout_i;
                nxt[static_cast<size_t>(e)] = z[static_cast<size_t>(e)] + av[r] * std::tanh(z[static_cast<size_t>(e)]);
            }
            u[static_cast<size_t>(i + 1)] = std::move(nxt);
        }
    }

    // dz at the top: sigmoid'(z) * dout
    std::vector<float> dz(static_cast<size_t>(n));
    {
        const auto& z = sc.z[static_cast<size_t>(depth - 1)];
        for (int64_t e = 0; e < n; ++e) {
            const float s = sigmoid(z[static_cast<size_t>(e)]);
            dz[static_cast<size_t>(e)] = dout[e] * s * (1.0f - s);
        }
    }

    for (int64_t i = depth - 1; i >= 0; --i) {
        const int64_t dout_i = dims[static_cast<size_t>(i + 1)];
        const int64_t din_i = dims[static_cast<size_t>(i)];
        const float* hp = gh[static_cast<size_t>(i)].data() + ch * dout_i * din_i;
        float sph[9], dsph[9];
        for (int64_t r = 0; r < dout_i * din_i; ++r) {
            sph[r] = softplus(hp[r]);
            dsph[r] = sigmoid(hp[r]);  // d softplus
        }

        if (param_grads) {
            float* ghp = gh[static_cast<size_t>(i)].grad() + ch * dout_i * din_i;
            float* gbp = gb[static_cast<size_t>(i)].grad() + ch * dout_i;
            const auto& ui = u[static_cast<size_t>(i)];
            for (int64_t e = 0; e < n; ++e) {
                const float* uv = ui.data() + e * din_i;
                const float* dzv = dz.data() + e * dout_i;
                for (int64_t r = 0; r < dout_i; ++r) {
                    gbp[r] += dzv[r];
                    for (int64_t cix = 0; cix < din_i; ++cix)
                        ghp[r * din_i + cix] += dzv[r] * dsph[r * din_i + cix] * uv[cix];
                }
            }
        }

        // du_i = H^T dz
        std::vector<float> du(static_cast<size_t>(n * din_i), 0.0f);
        for (int64_t e = 0; e < n; ++e) {
            const float* dzv = dz.data() + e * dout_i;
            float* duv = du.data() + e * din_i;
            for (int64_t r = 0; r < dout_i; ++r)
                for (int64_t cix = 0; cix < din_i; ++cix) duv[cix] += sph[r * din_i + cix] * dzv[r];
        }

        if (i == 0) {
            if (dx) {
                for (int64_t e = 0; e < n; ++e) dx[e] += du[static_cast<size_t>(e)];
            }
            break;
        }

        // through u_i = z_{i-1} + tanh(a) . tanh(z_{i-1})
        const int64_t prev_d = din_i;
        const float* ap = ga[static_cast<size_t>(i - 1)].data() + ch * prev_d;
        float av[3];
        for (int64_t r = 0; r < prev_d; ++r) av[r] = std::tanh(ap[r]);
        const auto& zprev = sc.z[static_cast<size_t>(i - 1)];
        std::vector<float> dzprev(static_cast<size_t>(n * prev_d));
        for (int64_t e = 0; e < n * prev_d; ++e) {
            const int64_t r = e % prev_d;
            const float t = std::tanh(zprev[static_cast<size_t>(e)]);
            dzprev[static_cast<size_t>(e)] = du[static_cast<size_t>(e)] * (1.0f + av[r] * (1.0f - t * t));
        }
        if (param_grads) {
            float* gap = ga[static_cast<size_t>(i - 1)].grad() + ch * prev_d;
            const float* arp = ap;
            for (int64_t e = 0; e < n; ++e) {
                for (int64_t r = 0; r < prev_d; ++r) {
                    const float t = std::tanh(zprev[static_cast<size_t>(e * prev_d + r)]);
                    const float a = std::tanh(arp[r]);
                    gap[r] += du[static_cast<size_t>(e * prev_d + r)] * t * (1.0f - a * a);
                }
            }
        }
        dz = std::move(dzprev);
    }
}

}  // namespace

FactorizedPrior::FactorizedPrior(int64_t channels, std::vector<int64_t> filters, float init_scale,
                                 Rng& rng)
    : channels_(channels) {
    if (channels <= 0) throw config_error("prior channels must be positive");
    for (int64_t f : filters) {
        if (f < 1 || f > 3) throw config_error("prior hidden widths must be in [1,3]");
    }
    std::vector<int64_t> dims;
    dims.push_back(1);
    for (int64_t f : filters) dims.push_back(f);
    dims.push_back(1);
    const int64_t depth = static_cast<int64_t>(dims.size()) - 1;
    const float scale = std::pow(init_scale, 1.0f / static_cast<float>(depth));

    for (int64_t i = 0; i < depth; ++i) {
        const int64_t din = dims[static_cast<size_t>(i)];
        const int64_t dout = dims[static_cast<size_t>(i + 1)];
        const float hinit = softplus_inv(1.0f / scale / static_cast<float>(dout));
        raw_h.push_back(Tensor::full({channels, dout, din}, hinit));
        Tensor b({channels, dout});
        for (int64_t j = 0; j < b.numel(); ++j) b.data()[j] = rng.uniform(-0.5f, 0.5f);
        raw_b.push_back(std::move(b));
        if (i + 1 < depth) raw_a.push_back(Tensor::zeros({channels, dout}));
    }
}

FactorizedPrior FactorizedPrior::deep(int64_t channels, uint64_t seed) {
    Rng rng(seed);
    return FactorizedPrior(channels, {3, 3, 3}, 10.0f, rng);
}

FactorizedPrior FactorizedPrior::logistic(int64_t channels, float scale) {
    Rng rng(1);
    FactorizedPrior p(channels, {}, 1.0f, rng);
    const float raw = softplus_inv(scale);
    for (int64_t c = 0; c < channels; ++c) {
        p.raw_h[0].data()[c] = raw;
        p.raw_b[0].data()[c] = 0.0f;
    }
    return p;
}

float cdf_eval(const FactorizedPrior& prior, int64_t channel, float x) {
    if (channel < 0 || channel >= prior.channels()) throw config_error("cdf_eval: channel out of range");
    float out = 0.0f;
    chain_forward(prior, channel, &x, 1, 0.0f, nullptr, &out);
    return out;
}

float likelihood(const FactorizedPrior& prior, int64_t channel, float y_hat) {
    const float hi = cdf_eval(prior, channel, y_hat + 0.5f);
    const float lo = cdf_eval(prior, channel, y_hat - 0.5f);
    return std::max(hi - lo, kLikelihoodFloor);
}

Tensor rate_bits(const FactorizedPrior& prior, const Tensor& y_hat, Tape* tape) {
    if (y_hat.ndim() != 3 && y_hat.ndim() != 4)
        throw config_error("rate_bits expects (C,h,w) or (B,C,h,w) latents");
    const bool batched = y_hat.ndim() == 4;
    const int64_t batch = batched ? y_hat.dim(0) : 1;
    const int64_t ch = y_hat.dim(batched ? 1 : 0);
    const int64_t hw = y_hat.dim(batched ? 2 : 1) * y_hat.dim(batched ? 3 : 2);
    if (ch != prior.channels()) throw config_error("rate_bits: latent channels != prior channels");
    const int64_t n = batch * hw;  // elements per channel

    const bool need_grads = tape != nullptr;
    auto sc_hi = std::make_shared<std::vector<ChainScratch>>(need_grads ? ch : 0);
    auto sc_lo = std::make_shared<std::vector<ChainScratch>>(need_grads ? ch : 0);
    auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(ch * n));
    auto xs = std::make_shared<std::vector<float>>(static_cast<size_t>(ch * n));
    std::vector<float> channel_bits(static_cast<size_t>(ch));

    // gather channel-contiguous values: xs[c*n + (b*hw+loc)]
    {
        const float* yp = y_hat.data();
        parallel_for(ch, [&](int64_t c0, int64_t c1) {
            for (int64_t c = c0; c < c1; ++c) {
                float* dst = xs->data() + c * n;
                for (int64_t b = 0; b < batch; ++b) {
                    const float* src = yp + (b * ch + c) * hw;
                    std::copy(src, src + hw, dst + b * hw);
                }
            }
        });
    }

    parallel_for(ch, [&](int64_t c0, int64_t c1) {
        std::vector<float> chi(static_cast<size_t>(n)), clo(static_cast<size_t>(n)),
            bits(static_cast<size_t>(n));
        for (int64_t c = c0; c < c1; ++c) {
            const float* x = xs->data() + c * n;
            ChainScratch* shi = need_grads ? &(*sc_hi)[static_cast<size_t>(c)] : nullptr;
            ChainScratch* slo = need_grads ? &(*sc_lo)[static_cast<size_t>(c)] : nullptr;
            chain_forward(prior, c, x, n, 0.5f, shi, chi.data());
            chain_forward(prior, c, x, n, -0.5f, slo, clo.data());
            float* pr = probs->data() + c * n;
            for (int64_t e = 0; e < n; ++e) {
                pr[e] = std::max(chi[static_cast<size_t>(e)] - clo[static_cast<size_t>(e)], kLikelihoodFloor);
                bits[static_cast<size_t>(e)] = -std::log2(pr[e]);
            }
            channel_bits[static_cast<size_t>(c)] = pairwise_sum(bits.data(), n);
        }
    });

    Tensor out = Tensor::scalar(pairwise_sum(channel_bits.data(), ch));
    out.ensure_finite("rate_bits");

    const bool y_grad = y_hat.requires_grad();
    bool param_grad = false;
    for (const auto& t : prior.raw_h) param_grad = param_grad || t.requires_grad();

    if (tape && (y_grad || param_grad)) {
        out.set_requires_grad(true);
        Tensor y = y_hat, total = out;
        // tensors captured by value share buffers with the prior's params
        auto gh = prior.raw_h;
        auto gb = prior.raw_b;
        auto ga = prior.raw_a;
        tape->record([y, total, gh, gb, ga, sc_hi, sc_lo, probs, xs, batch, ch, hw, n,
                      y_grad]() mutable {
            const float g = total.grad()[0];
            const bool pgrads = gh[0].requires_grad();
            std::vector<float> dx_all(y_grad ? static_cast<size_t>(ch * n) : 0, 0.0f);
            constexpr float kInvLn2 = 1.4426950408889634074f;

            parallel_for(ch, [&](int64_t c0, int64_t c1) {
                std::vector<float> dhi(static_cast<size_t>(n)), dlo(static_cast<size_t>(n));
                for (int64_t c = c0; c < c1; ++c) {
                    const float* pr = probs->data() + c * n;
                    for (int64_t e = 0; e < n; ++e) {
                        // d(-log2 p)/dp, zero where the clamp is active
                        const float d = pr[e] > kLikelihoodFloor ? -g * kInvLn2 / pr[e] : 0.0f;
                        dhi[static_cast<size_t>(e)] = d;
                        dlo[static_cast<size_t>(e)] = -d;
                    }
                    const float* x = xs->data() + c * n;
                    float* dx = y_grad ? dx_all.data() + c * n : nullptr;
                    chain_backward(c, x, n, 0.5f, (*sc_hi)[static_cast<size_t>(c)], dhi.data(), dx,
                                   pgrads, gh, gb, ga);
                    chain_backward(c, x, n, -0.5f, (*sc_lo)[static_cast<size_t>(c)], dlo.data(), dx,
                                   pgrads, gh, gb, ga);
                }
            });
            if (y_grad) {
                float* gy = y.grad();
                parallel_for(ch, [&](int64_t c0, int64_t c1) {
                    for (int64_t c = c0; c < c1; ++c) {
                        const float* src = dx_all.data() + c * n;
                        for (int64_t b = 0; b < batch; ++b) {
                            float* dst = gy + (b * ch + c) * hw;
                            for (int64_t l = 0; l < hw; ++l) dst[l] += src[b * hw + l];
                        }
                    }
                });
            }
        });
    }
    return out;
}

Tensor quantize(const Tensor& y, QuantizeMode mode, Rng* rng, Tape* tape) {
    const int64_t n = y.numel();
    Tensor out(y.shape());
    const float* yp = y.data();
    float* op = out.data();
    if (mode == QuantizeMode::round) {
        for (int64_t i = 0; i < n; ++i) op[i] = std::round(yp[i]);  // half away from zero
        return out;
    }
    if (rng == nullptr) throw config_error("quantize(noise) requires an rng");
    for (int64_t i = 0; i < n; ++i) op[i] = yp[i] + (rng->uniform01() - 0.5f);

    if (tape && y.requires_grad()) {
        out.set_requires_grad(true);
        Tensor yc = y, o = out;
        tape->record([yc, o, n]() mutable {
            const float* go = o.grad();
            float* gy = yc.grad();
            for (int64_t i = 0; i < n; ++i) gy[i] += go[i];
        });
    }
    return out;
}

double FactorizedPrior::channel_median(int64_t channel) const {
    double lo = -1.0, hi = 1.0;
    while (cdf_eval(*this, channel, static_cast<float>(lo)) > 0.5f && lo > -1e7) lo *= 2.0;
    while (cdf_eval(*this, channel, static_cast<float>(hi)) < 0.5f && hi < 1e7) hi *= 2.0;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (cdf_eval(*this, channel, static_cast<float>(mid)) < 0.5f)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

void FactorizedPrior::compute_support(double tail_mass, int pad, int64_t max_symbols) {
    y_min.assign(static_cast<size_t>(channels_), 0);
    y_max.assign(static_cast<size_t>(channels_), 0);
    const int64_t scan_cap = max_symbols * 4;
    for (int64_t c = 0; c < channels_; ++c) {
        const int32_t med = static_cast<int32_t>(std::llround(channel_median(c)));
        int32_t lo = med;
        int64_t steps = 0;
        while (cdf_eval(*this, c, static_cast<float>(lo) - 0.5f) > tail_mass) {
            --lo;
            if (++steps > scan_cap)
                throw config_error("prior support scan exceeded " + std::to_string(scan_cap) +
                                   " symbols for channel " + std::to_string(c));
        }
        int32_t hi = med;
        steps = 0;
        while (cdf_eval(*this, c, static_cast<float>(hi) + 0.5f) < 1.0f - tail_mass) {
            ++hi;
            if (++steps > scan_cap)
                throw config_error("prior support scan exceeded " + std::to_string(scan_cap) +
                                   " symbols for channel " + std::to_string(c));
        }
        y_min[static_cast<size_t>(c)] = lo - pad;
        y_max[static_cast<size_t>(c)] = hi + pad;
    }
}

CdfTableSet freeze(const FactorizedPrior& prior) {
    if (!prior.support_ready())
        throw config_error("freeze: support bounds not computed (call compute_support first)");
    CdfTableSet set;
    set.tables.resize(static_cast<size_t>(prior.channels()));
    for (int64_t c = 0; c < prior.channels(); ++c) {
        const int32_t lo = prior.y_min[static_cast<size_t>(c)];
        const int32_t hi = prior.y_max[static_cast<size_t>(c)];
        if (lo > hi) throw config_error("freeze: invalid support bounds for channel " + std::to_string(c));
        const int64_t symbols = static_cast<int64_t>(hi) - lo + 1;
        if (symbols > 4096)
            throw config_error("freeze: support of channel " + std::to_string(c) + " spans " +
                               std::to_string(symbols) + " symbols (max 4096)");

        std::vector<double> raw(static_cast<size_t>(symbols));
        std::vector<uint32_t> mass(static_cast<size_t>(symbols));
        for (int64_t s = 0; s < symbols; ++s) {
            raw[static_cast<size_t>(s)] =
                static_cast<double>(likelihood(prior, c, static_cast<float>(lo + s))) * CdfTableSet::kTotal;
            mass[static_cast<size_t>(s)] = static_cast<uint32_t>(raw[static_cast<size_t>(s)]);
        }
        int64_t assigned = 0;
        for (uint32_t m : mass) assigned += m;
        int64_t deficit = static_cast<int64_t>(CdfTableSet::kTotal) - assigned;

        // largest-remainder distribution of the deficit (ties by lower index)
        std::vector<int64_t> order(static_cast<size_t>(symbols));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
            const double ra = raw[static_cast<size_t>(a)] - std::floor(raw[static_cast<size_t>(a)]);
            const double rb = raw[static_cast<size_t>(b)] - std::floor(raw[static_cast<size_t>(b)]);
            return ra > rb;
        });
        int64_t k = 0;
        while (deficit > 0) {
            mass[static_cast<size_t>(order[static_cast<size_t>(k % symbols)])] += 1;
            ++k;
            --deficit;
        }
        // minimum one unit per symbol; a single donor (the largest mass)
        // absorbs the whole adjustment so every other symbol keeps the
        // largest-remainder +-1 guarantee
        int64_t zeros = 0;
        for (int64_t s = 0; s < symbols; ++s) zeros += mass[static_cast<size_t>(s)] == 0 ? 1 : 0;
        if (zeros > 0) {
            int64_t donor = 0;
            for (int64_t t = 1; t < symbols; ++t) {
                if (mass[static_cast<size_t>(t)] > mass[static_cast<size_t>(donor)]) donor = t;
            }
            if (mass[static_cast<size_t>(donor)] <= static_cast<uint32_t>(zeros))
                throw config_error("freeze: cannot enforce minimum symbol mass for channel " +
                                   std::to_string(c));
            mass[static_cast<size_t>(donor)] -= static_cast<uint32_t>(zeros);
            for (int64_t s = 0; s < symbols; ++s) {
                if (mass[static_cast<size_t>(s)] == 0) mass[static_cast<size_t>(s)] = 1;
            }
        }

        CdfTable table;
        table.y_min = lo;
        table.y_max = hi;
        table.cum.resize(static_cast<size_t>(symbols) + 1);
        table.cum[0] = 0;
        for (int64_t s = 0; s < symbols; ++s)
            table.cum[static_cast<size_t>(s + 1)] = table.cum[static_cast<size_t>(s)] + mass[static_cast<size_t>(s)];
        set.tables[static_cast<size_t>(c)] = std::move(table);
    }
    return set;
}

}  // namespace efc
