#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <thread>

#include "efc/bench.hpp"
#include "efc/checkpoint.hpp"
#include "efc/datagen.hpp"
#include "efc/eval.hpp"
#include "oracles.hpp"

using namespace efc;

namespace {

RateAccuracyCurve curve(std::string label, std::vector<CurvePoint> pts) {
    return make_curve(std::move(label), std::move(pts));
}

const RateAccuracyCurve kA = curve("A", {{0.1, 60}, {0.3, 70}, {0.6, 76}, {0.9, 80}});
const RateAccuracyCurve kB = curve("B", {{0.1, 62}, {0.3, 73}, {0.6, 78}, {0.9, 81}});

}  // namespace

TEST_CASE("curve validation: sorting, duplicates, minimum points") {
    const auto c = curve("x", {{0.9, 80}, {0.1, 60}, {0.5, 70}});
    CHECK(c.points.front().bpp == 0.1);
    CHECK(c.points.back().bpp == 0.9);
    CHECK_THROWS_AS(curve("dup", {{0.5, 60}, {0.5, 70}}), config_error);
    CHECK_THROWS_AS(curve("one", {{0.5, 60}}), config_error);
    CHECK_THROWS_AS(curve("neg", {{-0.1, 60}, {0.5, 70}}), config_error);
    CHECK_THROWS_AS(curve("pct", {{0.1, 160}, {0.5, 70}}), config_error);
}

TEST_CASE("delta_accuracy(A, A) is exactly zero") {
    CHECK(delta_accuracy(kA, kA, FitMethod::cubic) == 0.0);
    CHECK(delta_accuracy(kA, kA, FitMethod::linear) == 0.0);
}

TEST_CASE("constant offset shifts the result by exactly the offset") {
    for (double k : {2.0, -3.5, 0.25}) {
        std::vector<CurvePoint> shifted;
        for (const auto& p : kA.points) shifted.push_back({p.bpp, p.top1_pct + k});
        const auto test_curve = curve("A+k", std::move(shifted));
        CHECK(delta_accuracy(test_curve, kA, FitMethod::cubic) == doctest::Approx(k).epsilon(1e-9));
        CHECK(delta_accuracy(test_curve, kA, FitMethod::linear) == doctest::Approx(k).epsilon(1e-9));
    }
}

TEST_CASE("linear-method fixture: closed form gives +2.0") {
    const auto a = curve("A", {{0.1, 60}, {0.9, 76}});
    const auto b = curve("B", {{0.1, 63}, {0.9, 77}});
    // B - A = 3.25 - 2.5 r, mean over [0.1, 0.9] = 2.0
    CHECK(delta_accuracy(b, a, FitMethod::linear) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("cubic 4-point fixture matches the independent Simpson oracle") {
    const double impl = delta_accuracy(kB, kA, FitMethod::cubic);
    CHECK(impl == doctest::Approx(2.1666666667).epsilon(1e-6));  // golden, oracle-derived

    std::array<std::pair<double, double>, 4> a{{{0.1, 60}, {0.3, 70}, {0.6, 76}, {0.9, 80}}};
    std::array<std::pair<double, double>, 4> b{{{0.1, 62}, {0.3, 73}, {0.6, 78}, {0.9, 81}}};
    const double oracle = test::delta_accuracy_cubic_oracle(b, a);
    CHECK(std::fabs(impl - oracle) <= 1e-6);
}

TEST_CASE("antisymmetry within 1e-9") {
    for (auto m : {FitMethod::cubic, FitMethod::linear}) {
        const double ab = delta_accuracy(kA, kB, m);
        const double ba = delta_accuracy(kB, kA, m);
        CHECK(std::fabs(ab + ba) <= 1e-9);
    }
}

TEST_CASE("result is invariant to point ordering") {
    const auto shuffled = curve("B", {{0.9, 81}, {0.1, 62}, {0.6, 78}, {0.3, 73}});
    CHECK(delta_accuracy(shuffled, kA, FitMethod::cubic) ==
          delta_accuracy(kB, kA, FitMethod::cubic));
}

TEST_CASE("overlap and point-count preconditions") {
    const auto lo = curve("lo", {{0.1, 60}, {0.2, 65}});
    const auto hi = curve("hi", {{0.5, 70}, {0.9, 80}});
    CHECK_THROWS_AS(delta_accuracy(lo, hi, FitMethod::linear), config_error);  // empty overlap
    CHECK_THROWS_AS(delta_accuracy(lo, hi, FitMethod::cubic), config_error);   // < 4 points
    const auto three = curve("three", {{0.1, 60}, {0.5, 70}, {0.9, 80}});
    CHECK_THROWS_AS(delta_accuracy(three, kA, FitMethod::cubic), config_error);
}

TEST_CASE("normal-rate-axis convention differs from the log-axis variant") {
    // two curve families whose accuracy gap varies with rate, sampled on
    // different grids; the axis convention then genuinely matters
    auto f = [](double r) { return 50.0 + 30.0 * std::sqrt(r); };
    auto g = [](double r) { return 45.0 + 40.0 * std::sqrt(r); };
    std::vector<CurvePoint> pa, pb;
    for (double r : {0.2, 0.4, 0.6, 0.8}) pa.push_back({r, f(r)});
    for (double r : {0.25, 0.45, 0.65, 0.85}) pb.push_back({r, g(r)});
    const auto a = curve("a", std::move(pa));
    const auto b = curve("b", std::move(pb));

    const double normal_space = delta_accuracy(b, a, FitMethod::cubic);
    // pinned regression value for the normal-axis convention
    CHECK(normal_space == doctest::Approx(2.1579596837).epsilon(1e-8));

    // log-axis variant (BD style), computed here from the same cubically
    // interpolated curves: integrate over u = ln r
    std::array<std::pair<double, double>, 4> oa{
        {{0.2, f(0.2)}, {0.4, f(0.4)}, {0.6, f(0.6)}, {0.8, f(0.8)}}};
    std::array<std::pair<double, double>, 4> ob{
        {{0.25, g(0.25)}, {0.45, g(0.45)}, {0.65, g(0.65)}, {0.85, g(0.85)}}};
    const auto ca = test::cubic_through(oa);
    const auto cb = test::cubic_through(ob);
    auto eval = [](const std::array<double, 4>& c, double x) {
        return ((c[3] * x + c[2]) * x + c[1]) * x + c[0];
    };
    const double lo = std::log(0.25), hi = std::log(0.8);
    const double log_space =
        test::simpson([&](double u) { return eval(cb, std::exp(u)) - eval(ca, std::exp(u)); }, lo,
                      hi, 1 << 14) /
        (hi - lo);
    CHECK(log_space == doctest::Approx(1.7819492189).epsilon(1e-6));
    CHECK(std::fabs(normal_space - log_space) > 0.3);
}

TEST_CASE("shift equivariance holds for random curves (property)") {
    Rng rng(404);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<CurvePoint> pa, pb;
        double r = 0.05;
        for (int i = 0; i < 5; ++i) {
            r += 0.05 + 0.2 * rng.uniform01();
            pa.push_back({r, 40.0 + 40.0 * rng.uniform01()});
        }
        r = 0.08;
        for (int i = 0; i < 5; ++i) {
            r += 0.05 + 0.2 * rng.uniform01();
            pb.push_back({r, 40.0 + 40.0 * rng.uniform01()});
        }
        const double k = -5.0 + 10.0 * rng.uniform01();
        auto shifted = pb;
        for (auto& p : shifted) p.top1_pct += k;
        const auto a = curve("a", pa);
        const auto b = curve("b", pb);
        const auto bk = curve("bk", shifted);
        for (auto m : {FitMethod::cubic, FitMethod::linear}) {
            const double base = delta_accuracy(b, a, m);
            const double moved = delta_accuracy(bk, a, m);
            CHECK(moved - base == doctest::Approx(k).epsilon(1e-9));
        }
    }
}

TEST_CASE("latency harness: n must be positive") {
    CHECK_THROWS_AS(measure_latency([](int64_t) {}, 0, 0), config_error);
    CHECK_THROWS_AS(measure_latency([](int64_t) {}, -1, 5), config_error);
}

TEST_CASE("latency harness with an injected clock is exact and order-free") {
    // fake clock: every call advances 500us, so each iteration measures 500us
    auto make_clock = []() {
        auto t = std::make_shared<uint64_t>(0);
        return ClockFn([t]() {
            *t += 500000;
            return *t;
        });
    };
    const LatencyStats s1 = measure_latency([](int64_t) {}, 3, 10, make_clock());
    CHECK(s1.n == 10);
    CHECK(s1.warmup == 3);
    CHECK(s1.mean_us == doctest::Approx(500.0));
    CHECK(s1.median_us == doctest::Approx(500.0));
    CHECK(s1.p95_us == doctest::Approx(500.0));
    CHECK(s1.stddev_us == doctest::Approx(0.0));

    // a content-independent workload gives identical stats for any ordering
    std::vector<int> order_a{1, 2, 3}, order_b{3, 1, 2};
    auto run = [&](const std::vector<int>& order) {
        return measure_latency([&](int64_t i) { (void)order[size_t(i % 3)]; }, 2, 9, make_clock());
    };
    const LatencyStats sa = run(order_a);
    const LatencyStats sb = run(order_b);
    CHECK(sa.mean_us == sb.mean_us);
    CHECK(sa.p95_us == sb.p95_us);
    CHECK(sa.stddev_us == sb.stddev_us);
}

TEST_CASE("latency harness times a 1ms sleeping stub inside [1.0, 1.5] ms") {
    const LatencyStats s = measure_latency(
        [](int64_t) { std::this_thread::sleep_for(std::chrono::milliseconds(1)); }, 3, 25);
    CHECK(s.mean_us >= 1000.0);
    CHECK(s.mean_us <= 1500.0);
}

TEST_CASE("warmup iterations are excluded from the statistics") {
    // clock advances 10x longer during the first 4 calls (2 warmup iterations)
    auto t = std::make_shared<uint64_t>(0);
    auto calls = std::make_shared<int>(0);
    ClockFn clock = [t, calls]() {
        *t += (*calls)++ < 4 ? 5000000 : 200000;
        return *t;
    };
    const LatencyStats s = measure_latency([](int64_t) {}, 2, 8, clock);
    CHECK(s.mean_us == doctest::Approx(200.0));
}

TEST_CASE("collect_curve wires evaluate() outputs into sorted points") {
    // two tiny checkpoints with different weights -> different bpp
    ArchConfig arch;
    arch.enc_width = 12;
    arch.bottleneck_ch = 6;
    arch.dec_width = 12;
    arch.num_res_blocks = 0;
    const std::string data_path = "/tmp/efc_curve_data.bin";
    write_synthetic_cifar10(data_path, 24, 5);
    const Cifar10 ds = load_cifar10_binary(data_path);

    std::vector<std::string> paths;
    for (uint64_t seed : {100ull, 200ull}) {
        ModelBundle b = build_bundle(arch, seed);
        b.prior.compute_support();
        b.tables = freeze(b.prior);
        refresh_digest(b);
        const std::string p = "/tmp/efc_curve_" + std::to_string(seed) + ".ckpt";
        save_bundle(b, p);
        paths.push_back(p);
    }
    const RateAccuracyCurve c = collect_curve("tiny", paths, ds, NormStats{}, 24);
    REQUIRE(c.points.size() == 2);
    CHECK(c.points[0].bpp < c.points[1].bpp);

    // wiring: points match evaluate() exactly (module under test reloads them)
    for (const auto& p : paths) {
        const ModelBundle b = load_bundle(p);
        const EvalResult r = evaluate(b, ds, NormStats{}, 24);
        bool found = false;
        for (const auto& pt : c.points)
            found = found || (pt.bpp == r.bpp && pt.top1_pct == r.top1 * 100.0);
        CHECK(found);
    }

    // identical checkpoint twice -> duplicate bpp error
    CHECK_THROWS_AS(collect_curve("dup", {paths[0], paths[0]}, ds, NormStats{}, 24), config_error);
    for (const auto& p : paths) std::remove(p.c_str());
    std::remove(data_path.c_str());
}
