#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace efc {

// Deterministic RNG with explicit float mappings. Distribution shapes are
// implemented here rather than with std:: distributions so that a given seed
// produces the same stream on any standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(static_cast<std::mt19937::result_type>(seed)) {}

    uint32_t next_u32() { return gen_(); }

    // Uniform in [0,1) with 24 bits of mantissa.
    float uniform01() { return static_cast<float>(gen_() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller, one value per call (pairs cached).
    float normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        float u1 = uniform01();
        float u2 = uniform01();
        if (u1 < 1e-12f) u1 = 1e-12f;
        const float r = std::sqrt(-2.0f * std::log(u1));
        const float a = 6.2831853071795864769f * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    float normal(float mean, float stddev) { return mean + stddev * normal(); }

    // Fisher-Yates over [0,n).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = gen_() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937 gen_;
    float spare_ = 0.0f;
    bool has_spare_ = false;
};

}  // namespace efc
