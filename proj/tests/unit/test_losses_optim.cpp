#include <doctest.h>

#include <cmath>
#include <cstring>

#include "efc/losses.hpp"
#include "efc/ops.hpp"
#include "efc/optim.hpp"
#include "efc/rng.hpp"

using namespace efc;

TEST_CASE("mse of identical tensors is zero") {
    Rng rng(1);
    Tensor a({3, 5});
    for (int64_t i = 0; i < a.numel(); ++i) a.data()[i] = rng.normal();
    CHECK(mse(a, a).item() == 0.0f);
}

TEST_CASE("mse matches the mean of squared differences") {
    Tensor a = Tensor::from({4}, {1, 2, 3, 4});
    Tensor b = Tensor::from({4}, {0, 2, 5, 4});
    CHECK(mse(a, b).item() == doctest::Approx((1.0 + 0.0 + 4.0 + 0.0) / 4.0));
    CHECK_THROWS_AS(mse(a, Tensor::zeros({5})), config_error);
}

TEST_CASE("cross entropy of uniform logits is ln K") {
    Tensor logits = Tensor::from({2}, {0.0f, 0.0f});
    CHECK(cross_entropy(logits, {0}).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    Tensor l10 = Tensor::zeros({10});
    CHECK(cross_entropy(l10, {7}).item() == doctest::Approx(std::log(10.0)).epsilon(1e-6));
}

TEST_CASE("cross entropy rejects invalid labels") {
    Tensor logits = Tensor::zeros({2, 4});
    CHECK_THROWS_AS(cross_entropy(logits, {0, 4}), data_error);
    CHECK_THROWS_AS(cross_entropy(logits, {-1, 0}), data_error);
    CHECK_THROWS_AS(cross_entropy(logits, {0}), config_error);  // batch mismatch
}

TEST_CASE("cross entropy is stable for huge logits") {
    Tensor logits = Tensor::from({3}, {1000.0f, 0.0f, -1000.0f});
    const float v = cross_entropy(logits, {0}).item();
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(0.0f).epsilon(1e-6));
}

TEST_CASE("kl of identical logits is zero for any temperature") {
    Rng rng(2);
    Tensor t({4, 8});
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = 3.0f * rng.normal();
    for (float temp : {0.5f, 1.0f, 2.0f, 8.0f}) {
        CHECK(kl_teacher_student(t, t, temp).item() == doctest::Approx(0.0f).epsilon(1e-7));
    }
    CHECK_THROWS_AS(kl_teacher_student(t, t, 0.0f), config_error);
    CHECK_THROWS_AS(kl_teacher_student(t, t, -1.0f), config_error);
}

TEST_CASE("kl is nonnegative and detects divergence") {
    Tensor t = Tensor::from({1, 2}, {2.0f, -2.0f});
    Tensor s = Tensor::from({1, 2}, {-2.0f, 2.0f});
    CHECK(kl_teacher_student(t, s, 1.0f).item() > 1.0f);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    ParamSet ps;
    ps.add("w", Tensor::from({3}, {1.0f, -2.0f, 0.5f}));
    Adam opt;
    ps.zero_grad();
    opt.step(ps);
    const auto& w = ps.find("w").tensor;
    CHECK(w.data()[0] == 1.0f);
    CHECK(w.data()[1] == -2.0f);
    CHECK(w.data()[2] == 0.5f);
}

TEST_CASE("adam: first step with g=1 moves by about -lr") {
    // m_hat = v_hat = 1 at t=1, so delta = -lr / (1 + eps)
    ParamSet ps;
    ps.add("w", Tensor::from({1}, {0.7f}));
    ps.find("w").tensor.grad()[0] = 1.0f;
    Adam opt({0.1f, 0.9f, 0.999f, 1e-8f});
    opt.step(ps);
    CHECK(ps.find("w").tensor.data()[0] == doctest::Approx(0.7f - 0.1f).epsilon(1e-5));
}

TEST_CASE("adam: frozen parameters never move") {
    ParamSet ps;
    ps.add("w", Tensor::from({2}, {1.0f, 2.0f}), /*trainable=*/false);
    ps.add("v", Tensor::from({1}, {3.0f}));
    ps.find("v").tensor.grad()[0] = 1.0f;
    Adam opt;
    opt.step(ps);
    CHECK(ps.find("w").tensor.data()[0] == 1.0f);
    CHECK(ps.find("w").tensor.data()[1] == 2.0f);
    CHECK(ps.find("v").tensor.data()[0] != 3.0f);
}

TEST_CASE("adam: NaN gradient aborts with numeric_error") {
    ParamSet ps;
    ps.add("w", Tensor::from({2}, {1.0f, 2.0f}));
    ps.find("w").tensor.grad()[0] = std::numeric_limits<float>::quiet_NaN();
    Adam opt;
    CHECK_THROWS_AS(opt.step(ps), numeric_error);
    // nothing was mutated
    CHECK(ps.find("w").tensor.data()[0] == 1.0f);
    CHECK(opt.step_count() == 0);
}

TEST_CASE("adam converges on a quadratic") {
    ParamSet ps;
    ps.add("w", Tensor::from({2}, {4.0f, -3.0f}));
    Adam opt({0.05f, 0.9f, 0.999f, 1e-8f});
    for (int it = 0; it < 400; ++it) {
        auto& w = ps.find("w").tensor;
        ps.zero_grad();
        w.grad()[0] = 2.0f * (w.data()[0] - 1.0f);
        w.grad()[1] = 2.0f * (w.data()[1] + 2.0f);
        opt.step(ps);
    }
    CHECK(ps.find("w").tensor.data()[0] == doctest::Approx(1.0f).epsilon(1e-2));
    CHECK(ps.find("w").tensor.data()[1] == doctest::Approx(-2.0f).epsilon(1e-2));
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(1e-3f, 1e-5f, 0, 100) == doctest::Approx(1e-3));
    CHECK(cosine_lr(1e-3f, 1e-5f, 100, 100) == doctest::Approx(1e-5));
    CHECK(cosine_lr(1e-3f, 1e-5f, 50, 100) == doctest::Approx(0.5 * (1e-3 + 1e-5)));
}

TEST_CASE("weighted_sum recombines scalars exactly") {
    Tensor a = Tensor::scalar(2.0f);
    Tensor b = Tensor::scalar(-0.5f);
    Tensor c = weighted_sum({{3.0f, a}, {2.0f, b}});
    CHECK(c.item() == doctest::Approx(5.0f));
    CHECK_THROWS_AS(weighted_sum({}), config_error);
    CHECK_THROWS_AS(weighted_sum({{1.0f, Tensor::zeros({2})}}), config_error);
}

TEST_CASE("param set enforces unique names and prefix freezing") {
    ParamSet ps;
    ps.add("enc.w", Tensor::zeros({2}));
    ps.add("dec.w", Tensor::zeros({2}));
    CHECK_THROWS_AS(ps.add("enc.w", Tensor::zeros({2})), config_error);
    ps.set_trainable("enc.", false);
    CHECK_FALSE(ps.find("enc.w").trainable);
    CHECK(ps.find("dec.w").trainable);
    CHECK_THROWS_AS(ps.find("nope"), config_error);
}
