#include "efc/optim.hpp"

#include <cmath>

#include "efc/parallel.hpp"

namespace efc {

void Adam::step(ParamSet& params) {
    auto& all = params.all();
    if (slots_.size() < all.size()) slots_.resize(all.size());

    // Validate gradients before mutating anything, so a NaN aborts atomically.
    for (auto& p : all) {
        if (!p.trainable) continue;
        const float* g = p.tensor.grad();
        const int64_t n = p.tensor.numel();
        for (int64_t i = 0; i < n; ++i) {
            if (!std::isfinite(g[i]))
                throw numeric_error("adam: non-finite gradient in " + p.name);
        }
    }

    ++step_;
    const float b1 = cfg_.beta1;
    const float b2 = cfg_.beta2;
    const float bc1 = 1.0f - std::pow(b1, static_cast<float>(step_));
    const float bc2 = 1.0f - std::pow(b2, static_cast<float>(step_));

    for (size_t idx = 0; idx < all.size(); ++idx) {
        auto& p = all[idx];
        if (!p.trainable) continue;
        const int64_t n = p.tensor.numel();
        auto& mom = slots_[idx];
        if (mom.m.size() != static_cast<size_t>(n)) {
            mom.m.assign(static_cast<size_t>(n), 0.0f);
            mom.v.assign(static_cast<size_t>(n), 0.0f);
        }
        float* w = p.tensor.data();
        const float* g = p.tensor.grad();
        float* m = mom.m.data();
        float* v = mom.v.data();
        const float lr = cfg_.lr;
        const float eps = cfg_.eps;
        parallel_for(n, [&](int64_t i0, int64_t i1) {
            for (int64_t i = i0; i < i1; ++i) {
                m[i] = b1 * m[i] + (1.0f - b1) * g[i];
                v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
                const float mhat = m[i] / bc1;
                const float vhat = v[i] / bc2;
                w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        });
    }
}

float cosine_lr(float lr0, float lr_final, int64_t t, int64_t total) {
    if (total <= 0) return lr0;
    if (t < 0) t = 0;
    if (t > total) t = total;
    const double phase = 3.14159265358979323846 * static_cast<double>(t) / static_cast<double>(total);
    return static_cast<float>(lr_final + 0.5 * (lr0 - lr_final) * (1.0 + std::cos(phase)));
}

}  // namespace efc
