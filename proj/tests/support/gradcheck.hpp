#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "efc/rng.hpp"
#include "efc/tensor.hpp"

namespace efc::test {

// Central-finite-difference oracle for reverse-mode gradients.
//
// make_loss must rebuild the full forward pass from the current contents of
// the checked tensors and return a scalar; with a tape it also wires the
// backward closures. Checks `points` randomly chosen elements per tensor.
//
// rel_tol is the contract bound (1e-3). The absolute floor is
// atol + 6e-5 * |loss|: the difference quotient of a single-precision
// forward carries rounding noise up to ~eps_f32 * |loss| / (2h), which for
// h = 1e-3 is 6e-5 per unit of loss magnitude. A wrong backward formula
// shows up orders of magnitude above this floor.
struct GradCheckResult {
    int checked = 0;
    int failed = 0;
    double worst_rel = 0;
    std::string detail;
};

inline GradCheckResult gradcheck(std::vector<efc::Tensor> tensors,
                                 const std::function<efc::Tensor(efc::Tape*)>& make_loss,
                                 int points = 20, double rel_tol = 1e-3, double atol = 2e-4,
                                 uint64_t seed = 1234, float step = 1e-3f) {
    using efc::Tape;
    using efc::Tensor;

    for (auto& t : tensors) t.zero_grad();
    Tape tape;
    Tensor loss = make_loss(&tape);
    tape.backward(loss);
    const double noise_floor = 6e-5 * std::fabs(static_cast<double>(loss.item()));

    GradCheckResult res;
    efc::Rng rng(seed);
    for (auto& t : tensors) {
        const int64_t n = t.numel();
        for (int p = 0; p < points; ++p) {
            const int64_t i = rng.next_u32() % n;
            const float saved = t.data()[i];
            const double analytic = static_cast<double>(t.grad()[i]);

            t.data()[i] = saved + step;
            const double lp = static_cast<double>(make_loss(nullptr).item());
            t.data()[i] = saved - step;
            const double lm = static_cast<double>(make_loss(nullptr).item());
            t.data()[i] = saved;

            const double numeric = (lp - lm) / (2.0 * static_cast<double>(step));
            const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
            const double err = std::fabs(analytic - numeric);
            const double rel = err / std::max(scale, 1e-12);
            ++res.checked;
            if (err > atol + noise_floor + rel_tol * scale) {
                ++res.failed;
                if (res.detail.empty()) {
                    res.detail = "element " + std::to_string(i) + ": analytic " +
                                 std::to_string(analytic) + " vs numeric " + std::to_string(numeric);
                }
            }
            if (scale > 10 * atol) res.worst_rel = std::max(res.worst_rel, rel);
        }
    }
    return res;
}

}  // namespace efc::test
