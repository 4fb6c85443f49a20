#pragma once

#include <cstdint>
#include <vector>

#include "efc/rng.hpp"
#include "efc/tensor.hpp"

namespace efc {

// Fully factorized entropy model: one learnable univariate CDF per latent
// channel, built as a chain of monotone layers
//   u_{i+1} = z + tanh(a_i) . tanh(z),  z = softplus(Hraw_i) u_i + b_i
// closed by a logistic. softplus keeps every effective weight positive, which
// makes each c_k strictly increasing for any raw parameter values.
//
// raw_h[i] has shape (C, d_out, d_in), raw_b[i] (C, d_out), raw_a[i] (C, d_out)
// for i < depth-1. The default chain is 1 -> 3 -> 3 -> 3 -> 1 (depth 4).
class FactorizedPrior {
public:
    FactorizedPrior() = default;  // invalid until assigned from a factory
    FactorizedPrior(int64_t channels, std::vector<int64_t> filters, float init_scale, Rng& rng);
    static FactorizedPrior deep(int64_t channels, uint64_t seed = 0x5eed);
    // Degenerate single-layer prior with c(x) = logistic(scale * x).
    static FactorizedPrior logistic(int64_t channels, float scale = 1.0f);

    int64_t channels() const { return channels_; }
    int64_t depth() const { return static_cast<int64_t>(raw_h.size()); }

    std::vector<Tensor> raw_h, raw_b, raw_a;

    // Integer support bounds per channel (inclusive), valid after
    // compute_support() or when loaded from a checkpoint.
    std::vector<int32_t> y_min, y_max;
    bool support_ready() const { return !y_min.empty(); }

    // Scans outward from the channel median until the tail mass drops below
    // `tail_mass`, then pads by `pad` symbols on both sides.
    void compute_support(double tail_mass = 1e-6, int pad = 2, int64_t max_symbols = 4096);

    // x such that c(x) = 0.5, by bisection.
    double channel_median(int64_t channel) const;

private:
    int64_t channels_ = 0;
};

// CDF value in (0,1); strictly increasing in x.
float cdf_eval(const FactorizedPrior& prior, int64_t channel, float x);

// p_k(y) = c_k(y + 1/2) - c_k(y - 1/2), clamped below at 1e-9.
float likelihood(const FactorizedPrior& prior, int64_t channel, float y_hat);

inline constexpr float kLikelihoodFloor = 1e-9f;

// Total rate sum(-log2 p) over a latent of shape (C,h,w) or (B,C,h,w).
// Differentiable w.r.t. y_hat and the prior parameters when taped.
Tensor rate_bits(const FactorizedPrior& prior, const Tensor& y_hat, Tape* tape = nullptr);

enum class QuantizeMode { noise, round };

// noise: y + U(-1/2,1/2) i.i.d. (training proxy, gradient passes through);
// round: half away from zero, deterministic (inference).
Tensor quantize(const Tensor& y, QuantizeMode mode, Rng* rng = nullptr, Tape* tape = nullptr);

// Frozen per-channel cumulative-frequency table, 16-bit precision.
// cum has S+1 entries, cum[0] = 0, cum[S] = 65536, strictly increasing
// (every symbol keeps at least one unit of mass).
struct CdfTable {
    int32_t y_min = 0;
    int32_t y_max = -1;
    std::vector<uint32_t> cum;
    int64_t symbols() const { return static_cast<int64_t>(cum.size()) - 1; }
};

struct CdfTableSet {
    static constexpr uint32_t kPrecisionBits = 16;
    static constexpr uint32_t kTotal = 1u << kPrecisionBits;
    std::vector<CdfTable> tables;
};

// Deterministic discretization of the prior over its computed support:
// floor + largest-remainder normalization to 2^16, minimum one unit per
// symbol. Throws config_error if support bounds are missing or a channel
// spans more than 4096 symbols.
CdfTableSet freeze(const FactorizedPrior& prior);

}  // namespace efc
