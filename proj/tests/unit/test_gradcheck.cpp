#include <doctest.h>

#include "efc/losses.hpp"
#include "efc/model.hpp"
#include "efc/ops.hpp"
#include "efc/prior.hpp"
#include "efc/rng.hpp"
#include "gradcheck.hpp"

using namespace efc;
using efc::test::gradcheck;

namespace {

Tensor randn(std::vector<int64_t> shape, uint64_t seed, float scale = 1.0f) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = scale * rng.normal();
    return t;
}

// scalar readout that mixes all elements with fixed pseudo-random weights,
// so every gradient entry is exercised
Tensor readout(const Tensor& y, Tape* tape, uint64_t seed = 99) {
    Tensor w = randn(y.shape(), seed);
    return mse(y, w, tape);
}

}  // namespace

TEST_CASE("gradcheck: conv2d w.r.t. input, weight and bias") {
    Tensor x = randn({2, 3, 6, 6}, 1);
    Tensor w = randn({4, 3, 3, 3}, 2, 0.5f);
    Tensor b = randn({4}, 3, 0.2f);
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    auto loss = [&](Tape* t) { return readout(conv2d(x, w, b, 1, 1, t), t); };
    const auto r = gradcheck({x, w, b}, loss);
    INFO(r.detail);
    CHECK(r.failed == 0);
}

TEST_CASE("gradcheck: strided conv2d") {
    Tensor x = randn({1, 3, 8, 8}, 4);
    Tensor w = randn({5, 3, 3, 3}, 5, 0.5f);
    Tensor b = randn({5}, 6, 0.2f);
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    auto loss = [&](Tape* t) { return readout(conv2d(x, w, b, 2, 1, t), t); };
    const auto r = gradcheck({x, w, b}, loss);
    INFO(r.detail);
    CHECK(r.failed == 0);
}

TEST_CASE("gradcheck: gelu") {
    Tensor x = randn({3, 5, 5}, 7);
    x.set_requires_grad(true);
    auto loss = [&](Tape* t) { return readout(gelu(x, t), t); };
    const auto r = gradcheck({x}, loss);
    INFO(r.detail);
    CHECK(r.failed == 0);
}

TEST_CASE("gradcheck: gdn w.r.t. input, beta and gamma") {
    Tensor x = randn({3, 4, 4}, 8);
    Tensor beta = Tensor::full({3}, 1.2f);
    Tensor gamma = Tensor::full({3, 3}, 0.08f);
    x.set_requires_grad(true);
    beta.set_requires_grad(true);
    gamma.set_requires_grad(true);
    auto loss = [&](Tape* t) { return readout(gdn(x, beta, gamma, t), t); };
    const auto r = gradcheck({x, beta, gamma}, loss);
    INFO(r.detail);
    CHECK(r.failed == 0);
}

TEST_CASE("gradcheck: upsample2x_nearest") {
    Tensor x = randn({2, 3, 3}, 9);
    x.set_requires_grad(true);
    auto loss = [&](Tape* t) { return readout(upsample2x_nearest(x, t), t); };
    const auto r = gradcheck({x}, loss);
    INFO(r.detail);
    CHECK(r.failed == 0);
}

TEST_CASE("gradcheck: dense_head vs central differences (rel err <= 1e-3)") {
    Tensor f = randn({1, 4, 3, 3}, 10);
    Tensor w = randn({5, 4}, 11, 0.5f);
    Tensor b = randn({5}, 12, 0.2f);
    f.set_requires_grad(true);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    auto loss = [&](Tape* t) { return readout(dense_head(f, w, b, t), t); };
    const auto r = gradcheck({f, w, b}, loss);
    INFO(r.detail);
    CHECK(r.failed == 0);
}

TEST_CASE("gradcheck: softplus and add") {
    Tensor x = randn({4, 4}, 13);
    Tensor y = randn({4, 4}, 14);
    x.set_requires_grad(true);
    y.set_requires_grad(true);
    auto loss = [&](Tape* t) { return readout(add(softplus(x, t), y, t), t); };
    const auto r = gradcheck({x, y}, loss);
    INFO(r.detail);
    CHECK(r.failed == 0);
}

TEST_CASE("gradcheck: losses") {
    Tensor a = randn({3, 4, 4}, 15);
    Tensor b = randn({3, 4, 4}, 16);
    a.set_requires_grad(true);
    SUBCASE("mse") {
        auto loss = [&](Tape* t) { return mse(a, b, t); };
        const auto r = gradcheck({a}, loss);
        INFO(r.detail);
        CHECK(r.failed == 0);
    }
    SUBCASE("cross_entropy") {
        Tensor logits = randn({4, 6}, 17);
        logits.set_requires_grad(true);
        std::vector<int> labels{0, 3, 5, 2};
        auto loss = [&](Tape* t) { return cross_entropy(logits, labels, t); };
        const auto r = gradcheck({logits}, loss);
        INFO(r.detail);
        CHECK(r.failed == 0);
    }
    SUBCASE("kl at T=1 and T=4") {
        Tensor tl = randn({4, 6}, 18);
        Tensor sl = randn({4, 6}, 19);
        sl.set_requires_grad(true);
        for (float temp : {1.0f, 4.0f}) {
            auto loss = [&](Tape* t) { return kl_teacher_student(tl, sl, temp, t); };
            const auto r = gradcheck({sl}, loss);
            INFO("T=", temp, " ", r.detail);
            CHECK(r.failed == 0);
        }
    }
}

TEST_CASE("gradcheck: residual block (1x4x4)") {
    Tensor x = randn({1, 4, 4}, 20);
    Tensor w1 = randn({1, 1, 3, 3}, 21, 0.4f);
    Tensor b1 = randn({1}, 22, 0.1f);
    Tensor w2 = randn({1, 1, 3, 3}, 23, 0.4f);
    Tensor b2 = randn({1}, 24, 0.1f);
    for (Tensor* t : {&x, &w1, &b1, &w2, &b2}) t->set_requires_grad(true);
    auto loss = [&](Tape* t) { return readout(residual_block(x, w1, b1, w2, b2, t), t); };
    const auto r = gradcheck({x, w1, b1, w2, b2}, loss);
    INFO(r.detail);
    CHECK(r.failed == 0);
}

TEST_CASE("gradcheck: rate_bits through latents and prior parameters") {
    FactorizedPrior prior = FactorizedPrior::deep(3, 77);
    for (auto* group : {&prior.raw_h, &prior.raw_b, &prior.raw_a})
        for (auto& t : *group) t.set_requires_grad(true);
    Tensor y = randn({3, 4, 4}, 25, 2.0f);
    y.set_requires_grad(true);

    auto loss = [&](Tape* t) {
        Tensor bits = rate_bits(prior, y, t);
        return weighted_sum({{0.01f, bits}}, t);
    };
    std::vector<Tensor> checked{y};
    for (auto& t : prior.raw_h) checked.push_back(t);
    for (auto& t : prior.raw_b) checked.push_back(t);
    for (auto& t : prior.raw_a) checked.push_back(t);
    const auto r = gradcheck(checked, loss, 20, 1e-3, 5e-4);
    INFO(r.detail);
    CHECK(r.failed == 0);
}

TEST_CASE("gradcheck: quantize(noise) passes gradient through") {
    Tensor y = randn({2, 3, 3}, 26);
    y.set_requires_grad(true);
    Tensor target = randn({2, 3, 3}, 27);
    // same noise on every rebuild so the finite-difference sees one function
    auto loss = [&](Tape* t) {
        Rng noise(5150);
        return mse(quantize(y, QuantizeMode::noise, &noise, t), target, t);
    };
    const auto r = gradcheck({y}, loss);
    INFO(r.detail);
    CHECK(r.failed == 0);
}

TEST_CASE("gradcheck: decoder path end-to-end (tiny widths)") {
    ArchConfig arch;
    arch.enc_width = 6;
    arch.bottleneck_ch = 4;
    arch.dec_width = 6;
    arch.num_res_blocks = 1;
    arch.input_h = arch.input_w = 16;
    ModelBundle bundle = build_bundle(arch, 31);

    Tensor y = randn({4, 2, 2}, 28);
    y.set_requires_grad(true);
    auto loss = [&](Tape* t) { return readout(decoder_forward(bundle, y, t), t); };
    std::vector<Tensor> checked{y, bundle.params.find("decoder.up.w").tensor,
                                bundle.params.find("decoder.block2.conv1.w").tensor,
                                bundle.params.find("decoder.in.b").tensor};
    // eight stacked f32 convs accumulate more rounding noise in the
    // difference quotient than a single op; widen the absolute floor only
    const auto r = gradcheck(checked, loss, 20, 1e-3, 1e-3);
    INFO(r.detail);
    CHECK(r.failed == 0);
}
