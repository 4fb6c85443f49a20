#pragma once

#include <cstdint>
#include <vector>

#include "efc/params.hpp"

namespace efc {

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Bias-corrected adaptive-moment optimizer. Moment buffers shape-match their
// parameters; frozen parameters are skipped entirely. A NaN/Inf gradient on a
// trainable parameter aborts the step with numeric_error.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamSet& params);

    // Overrides the learning rate for subsequent steps (cosine schedule etc.).
    void set_lr(float lr) { cfg_.lr = lr; }
    float lr() const { return cfg_.lr; }
    int64_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Moments {
        std::vector<float> m, v;
    };
    AdamConfig cfg_;
    int64_t step_ = 0;
    std::vector<Moments> slots_;  // parallel to params.all() order
};

// lr_final + 0.5*(lr0-lr_final)*(1+cos(pi*t/total)) for t in [0,total].
float cosine_lr(float lr0, float lr_final, int64_t t, int64_t total);

}  // namespace efc
