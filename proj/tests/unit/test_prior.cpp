#include <doctest.h>

#include <cmath>

#include "efc/ops.hpp"
#include "efc/prior.hpp"
#include "efc/rng.hpp"
#include "oracles.hpp"

using namespace efc;

TEST_CASE("degenerate logistic prior: c(0)=0.5, c(0.5)=sigma(0.5)") {
    FactorizedPrior p = FactorizedPrior::logistic(2);
    CHECK(cdf_eval(p, 0, 0.0f) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(cdf_eval(p, 1, 0.5f) == doctest::Approx(0.6224593).epsilon(1e-6));
    CHECK(cdf_eval(p, 0, 0.5f) == doctest::Approx(test::logistic_oracle(0.5)).epsilon(1e-6));
    CHECK_THROWS_AS(cdf_eval(p, 2, 0.0f), config_error);
}

TEST_CASE("cdf is strictly increasing on a 1000-point grid") {
    for (uint64_t seed : {1ull, 77ull, 4242ull}) {
        FactorizedPrior p = FactorizedPrior::deep(1, seed);
        // scramble parameters to exercise monotonicity away from init
        Rng rng(seed * 7 + 1);
        for (auto* group : {&p.raw_h, &p.raw_b, &p.raw_a})
            for (auto& t : *group)
                for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] += rng.normal();
        float prev = cdf_eval(p, 0, -25.0f);
        CHECK(prev > 0.0f);
        for (int i = 1; i < 1000; ++i) {
            const float x = -25.0f + 0.05f * static_cast<float>(i);
            const float c = cdf_eval(p, 0, x);
            CHECK(c > prev);
            CHECK(c < 1.0f);
            prev = c;
        }
    }
}

TEST_CASE("likelihood: logistic prior at 0 gives sigma(.5)-sigma(-.5)") {
    FactorizedPrior p = FactorizedPrior::logistic(1);
    CHECK(likelihood(p, 0, 0.0f) == doctest::Approx(0.2449187).epsilon(1e-5));
}

TEST_CASE("likelihood mass over the support telescopes to about one") {
    FactorizedPrior p = FactorizedPrior::deep(4, 3);
    p.compute_support();
    for (int64_t c = 0; c < 4; ++c) {
        double mass = 0;
        for (int32_t s = p.y_min[size_t(c)]; s <= p.y_max[size_t(c)]; ++s)
            mass += likelihood(p, c, float(s));
        CHECK(mass >= 1.0 - 2e-6);
        CHECK(mass <= 1.0 + 1e-6);
    }
}

TEST_CASE("likelihood is clamped at the floor") {
    FactorizedPrior p = FactorizedPrior::logistic(1, 8.0f);  // sharp logistic
    CHECK(likelihood(p, 0, 100.0f) >= kLikelihoodFloor);
    CHECK(likelihood(p, 0, -100.0f) >= kLikelihoodFloor);
}

TEST_CASE("rate_bits: 16 elements at p=0.5 cost 16 bits") {
    // scale s with sigma(s/2)=0.75 makes the unit interval around 0 carry 1 bit
    const float scale = 2.0f * std::log(3.0f);
    FactorizedPrior p = FactorizedPrior::logistic(1, scale);
    Tensor y = Tensor::zeros({1, 4, 4});
    CHECK(rate_bits(p, y).item() == doctest::Approx(16.0).epsilon(1e-4));
}

TEST_CASE("rate_bits: near-certain symbols cost almost nothing") {
    FactorizedPrior p = FactorizedPrior::logistic(1, 60.0f);
    Tensor y = Tensor::zeros({1, 4, 4});
    CHECK(rate_bits(p, y).item() < 0.01);
}

TEST_CASE("quantize: rounding half away from zero") {
    Tensor y = Tensor::from({4}, {2.5f, -2.5f, 1.2f, -0.5f});
    Tensor q = quantize(y, QuantizeMode::round);
    CHECK(q.data()[0] == 3.0f);
    CHECK(q.data()[1] == -3.0f);
    CHECK(q.data()[2] == 1.0f);
    CHECK(q.data()[3] == -1.0f);
}

TEST_CASE("quantize: noise is centered (1e5-sample Monte Carlo)") {
    Tensor y = Tensor::zeros({100000});
    Rng rng(31337);
    Tensor q = quantize(y, QuantizeMode::noise, &rng);
    double mean = 0, lo = 1, hi = -1;
    for (int64_t i = 0; i < q.numel(); ++i) {
        mean += q.data()[i];
        lo = std::min(lo, double(q.data()[i]));
        hi = std::max(hi, double(q.data()[i]));
    }
    mean /= double(q.numel());
    CHECK(std::fabs(mean) < 0.01);
    CHECK(lo >= -0.5);
    CHECK(hi <= 0.5);
    CHECK_THROWS_AS(quantize(y, QuantizeMode::noise, nullptr), config_error);
}

TEST_CASE("freeze: logistic prior with support [-4,4]") {
    FactorizedPrior p = FactorizedPrior::logistic(1);
    p.y_min = {-4};
    p.y_max = {4};
    CdfTableSet set = freeze(p);
    REQUIRE(set.tables.size() == 1);
    const CdfTable& t = set.tables[0];
    CHECK(t.symbols() == 9);
    CHECK(t.cum.front() == 0);
    CHECK(t.cum.back() == CdfTableSet::kTotal);
    for (size_t i = 1; i < t.cum.size(); ++i) CHECK(t.cum[i] > t.cum[i - 1]);
}

TEST_CASE("freeze is deterministic") {
    FactorizedPrior p = FactorizedPrior::deep(3, 11);
    p.compute_support();
    CdfTableSet a = freeze(p);
    CdfTableSet b = freeze(p);
    REQUIRE(a.tables.size() == b.tables.size());
    for (size_t c = 0; c < a.tables.size(); ++c) {
        CHECK(a.tables[c].y_min == b.tables[c].y_min);
        CHECK(a.tables[c].cum == b.tables[c].cum);
    }
}

TEST_CASE("frozen mass tracks the real likelihood within one unit") {
    FactorizedPrior p = FactorizedPrior::deep(2, 5);
    p.compute_support();
    CdfTableSet set = freeze(p);
    for (int64_t c = 0; c < 2; ++c) {
        const CdfTable& t = set.tables[size_t(c)];
        // min-mass clamps are funded by one donor: the largest raw mass
        int64_t donor = 0;
        double donor_raw = -1;
        int64_t clamped = 0;
        for (int64_t s = 0; s < t.symbols(); ++s) {
            const double raw =
                double(likelihood(p, c, float(t.y_min + s))) * double(CdfTableSet::kTotal);
            if (raw < 1.0) ++clamped;
            if (raw > donor_raw) {
                donor_raw = raw;
                donor = s;
            }
        }
        for (int64_t s = 0; s < t.symbols(); ++s) {
            const double raw =
                double(likelihood(p, c, float(t.y_min + s))) * double(CdfTableSet::kTotal);
            const double mass = double(t.cum[size_t(s + 1)] - t.cum[size_t(s)]);
            if (s == donor) {
                CHECK(std::fabs(mass - raw) <= 1.0 + double(clamped));
            } else if (raw < 1.0) {
                CHECK(mass == 1.0);  // clamped to the minimum
            } else {
                CHECK(std::fabs(mass - raw) <= 1.0);
            }
        }
    }
}

TEST_CASE("freeze rejects oversized supports and missing bounds") {
    FactorizedPrior p = FactorizedPrior::logistic(1);
    CHECK_THROWS_AS(freeze(p), config_error);  // support not computed
    p.y_min = {-3000};
    p.y_max = {3000};
    CHECK_THROWS_AS(freeze(p), config_error);  // 6001 symbols > 4096
}

TEST_CASE("support scan pads by two symbols and covers the tails") {
    FactorizedPrior p = FactorizedPrior::deep(2, 21);
    p.compute_support();
    for (int64_t c = 0; c < 2; ++c) {
        const float lo = float(p.y_min[size_t(c)]);
        const float hi = float(p.y_max[size_t(c)]);
        CHECK(cdf_eval(p, c, lo - 0.5f) <= 1e-6f);
        CHECK(cdf_eval(p, c, hi + 0.5f) >= 1.0f - 1e-6f);
        CHECK(p.y_min[size_t(c)] <= p.y_max[size_t(c)]);
    }
}
