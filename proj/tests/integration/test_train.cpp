#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "efc/checkpoint.hpp"
#include "efc/datagen.hpp"
#include "efc/eval.hpp"
#include "efc/losses.hpp"
#include "efc/train.hpp"

using namespace efc;

namespace {

struct Workspace {
    std::string dir;
    Workspace() : dir("/tmp/efc_train_ws") {
        std::remove((dir + "/train.bin").c_str());
        std::remove((dir + "/test.bin").c_str());
        (void)system(("mkdir -p " + dir).c_str());
        write_synthetic_cifar10(dir + "/train.bin", 192, 11);
        write_synthetic_cifar10(dir + "/test.bin", 48, 12);
    }
};

ArchConfig tiny_arch() {
    ArchConfig a;
    a.enc_width = 12;
    a.bottleneck_ch = 6;
    a.dec_width = 12;
    a.num_res_blocks = 1;
    return a;
}

TrainConfig tiny_config(const Workspace& ws, const std::string& teacher) {
    TrainConfig cfg;
    cfg.arch = tiny_arch();
    cfg.train_path = ws.dir + "/train.bin";
    cfg.test_path = ws.dir + "/test.bin";
    cfg.teacher_path = teacher;
    cfg.epochs_stage1 = 1;
    cfg.epochs_stage2 = 1;
    cfg.batch_size = 64;
    cfg.eval_subset = 16;
    cfg.seed = 5;
    return cfg;
}

std::string make_teacher(const Workspace& ws) {
    const std::string path = ws.dir + "/teacher.ckpt";
    TeacherTrainConfig tc;
    tc.arch = tiny_arch();
    tc.train_path = ws.dir + "/train.bin";
    tc.test_path = ws.dir + "/test.bin";
    tc.epochs = 1;
    tc.batch_size = 64;
    tc.seed = 3;
    train_teacher(tc, path);
    return path;
}

std::vector<float> param_bytes(const ParamSet& ps, const std::string& prefix) {
    std::vector<float> out;
    for (const auto& p : ps.all()) {
        if (p.name.rfind(prefix, 0) != 0) continue;
        out.insert(out.end(), p.tensor.data(), p.tensor.data() + p.tensor.numel());
    }
    return out;
}

}  // namespace

TEST_CASE("single_stage_loss: Eq-style decomposition and term removal") {
    Workspace ws;
    const std::string teacher_path = make_teacher(ws);
    const Cifar10 train_set = load_cifar10_binary(ws.dir + "/train.bin");
    ModelBundle bundle = build_bundle(tiny_arch(), 4);
    bundle.teacher = std::make_shared<TeacherModel>(load_teacher(teacher_path));
    init_classifier_from_teacher(bundle, *bundle.teacher);

    Rng rng(6);
    const Batch batch = make_batch(train_set, {0, 1, 2, 3, 4, 5, 6, 7}, NormStats{}, false, rng);

    SUBCASE("recombination is exact to 1e-6") {
        for (double lambda : {0.3, 1.0, 3.0}) {
            Rng noise(7);
            const LossOutput lo =
                single_stage_loss(batch, bundle, lambda, QuantizeMode::noise, 1.0f, &noise, nullptr);
            const double recombined =
                lambda * lo.rate_bpp + lo.mse + 0.5 * (lo.kl + lo.ce);
            CHECK(double(lo.total.item()) == doctest::Approx(recombined).epsilon(1e-6));
        }
    }
    SUBCASE("lambda = 0 removes the rate term") {
        Rng noise(7);
        const LossOutput lo =
            single_stage_loss(batch, bundle, 0.0, QuantizeMode::noise, 1.0f, &noise, nullptr);
        CHECK(double(lo.total.item()) ==
              doctest::Approx(lo.mse + 0.5 * (lo.kl + lo.ce)).epsilon(1e-6));
        CHECK(lo.rate_bpp > 0.0);  // still reported
    }
    SUBCASE("round mode is rejected for training") {
        Rng noise(7);
        CHECK_THROWS_AS(
            single_stage_loss(batch, bundle, 1.0, QuantizeMode::round, 1.0f, &noise, nullptr),
            config_error);
    }
    SUBCASE("missing teacher is an error") {
        ModelBundle orphan = build_bundle(tiny_arch(), 8);
        Rng noise(7);
        CHECK_THROWS_AS(
            single_stage_loss(batch, orphan, 1.0, QuantizeMode::noise, 1.0f, &noise, nullptr),
            config_error);
    }
    SUBCASE("student forced equal to teacher zeroes MSE and KL") {
        const TeacherOutput t = teacher_forward(*bundle.teacher, batch.images, nullptr);
        CHECK(mse(t.stem_feature, t.stem_feature).item() == 0.0f);
        CHECK(kl_teacher_student(t.logits, t.logits, 1.0f).item() ==
              doctest::Approx(0.0).epsilon(1e-7));
    }
}

TEST_CASE("train: single_stage produces a working checkpoint and CSV log") {
    Workspace ws;
    const std::string teacher_path = make_teacher(ws);
    TrainConfig cfg = tiny_config(ws, teacher_path);
    cfg.metrics_csv = ws.dir + "/metrics.csv";
    const std::string out = ws.dir + "/single.ckpt";

    const TrainResult r = train(cfg, out);
    CHECK_FALSE(r.nan_abort);
    CHECK(r.completed_epochs == 1);
    CHECK(r.final_bpp > 0.0);
    REQUIRE(r.history.size() == 1);
    CHECK(r.history[0].eval_bpp > 0.0);

    std::ifstream csv(cfg.metrics_csv);
    std::string header;
    std::getline(csv, header);
    CHECK(header == "epoch,l_R,l_MSE,l_KL,l_CE,total,eval_bpp,eval_top1");
    std::string row;
    CHECK(bool(std::getline(csv, row)));

    const ModelBundle loaded = load_bundle(out);
    CHECK(loaded.has_tables());
    const Cifar10 test_set = load_cifar10_binary(cfg.test_path);
    const EvalResult ev = evaluate(loaded, test_set, cfg.norm, 0);
    CHECK(ev.bpp == doctest::Approx(r.final_bpp));
    CHECK(ev.top1 == doctest::Approx(r.final_top1));
}

TEST_CASE("train: reproducible given config and seed") {
    Workspace ws;
    const std::string teacher_path = make_teacher(ws);
    TrainConfig cfg = tiny_config(ws, teacher_path);
    const TrainResult r1 = train(cfg, ws.dir + "/rep1.ckpt");
    const TrainResult r2 = train(cfg, ws.dir + "/rep2.ckpt");
    CHECK(r1.final_bpp == r2.final_bpp);
    CHECK(r1.final_top1 == r2.final_top1);
    const ModelBundle b1 = load_bundle(ws.dir + "/rep1.ckpt");
    const ModelBundle b2 = load_bundle(ws.dir + "/rep2.ckpt");
    CHECK(b1.digest == b2.digest);
}

TEST_CASE("freeze contract: cls_fixed leaves the classifier bytes untouched") {
    Workspace ws;
    const std::string teacher_path = make_teacher(ws);
    TrainConfig cfg = tiny_config(ws, teacher_path);
    cfg.setting = Setting::cls_fixed;
    const std::string out = ws.dir + "/clsfixed.ckpt";
    train(cfg, out);

    const ModelBundle trained = load_bundle(out);
    // the classifier was initialized from the teacher tail and must still be it
    const TeacherModel teacher = load_teacher(teacher_path);
    ModelBundle reference = build_bundle(cfg.arch, cfg.seed);
    init_classifier_from_teacher(reference, teacher);
    const auto got = param_bytes(trained.params, "classifier.");
    const auto expect = param_bytes(reference.params, "classifier.");
    REQUIRE(got.size() == expect.size());
    CHECK(std::memcmp(got.data(), expect.data(), got.size() * 4) == 0);

    // while the encoder did train
    const auto enc_got = param_bytes(trained.params, "encoder.");
    const auto enc_init = param_bytes(reference.params, "encoder.");
    CHECK(std::memcmp(enc_got.data(), enc_init.data(), enc_got.size() * 4) != 0);
}

TEST_CASE("freeze contract: two_stage stage 2 leaves encoder and prior untouched") {
    Workspace ws;
    const std::string teacher_path = make_teacher(ws);
    TrainConfig cfg = tiny_config(ws, teacher_path);
    cfg.strategy = Strategy::two_stage;
    cfg.epochs_stage1 = 1;

    // identical stage 1; different stage-2 lengths. frozen parts must agree
    cfg.epochs_stage2 = 1;
    train(cfg, ws.dir + "/two_a.ckpt");
    cfg.epochs_stage2 = 2;
    train(cfg, ws.dir + "/two_b.ckpt");

    const ModelBundle a = load_bundle(ws.dir + "/two_a.ckpt");
    const ModelBundle b = load_bundle(ws.dir + "/two_b.ckpt");
    for (const char* prefix : {"encoder.", "prior."}) {
        const auto ba = param_bytes(a.params, prefix);
        const auto bb = param_bytes(b.params, prefix);
        REQUIRE(ba.size() == bb.size());
        CHECK(std::memcmp(ba.data(), bb.data(), ba.size() * 4) == 0);
    }
    // stage 2 did something: decoders differ
    const auto da = param_bytes(a.params, "decoder.");
    const auto db = param_bytes(b.params, "decoder.");
    CHECK(std::memcmp(da.data(), db.data(), da.size() * 4) != 0);
}

TEST_CASE("train: divergence aborts with the last good weights") {
    Workspace ws;
    const std::string teacher_path = make_teacher(ws);
    TrainConfig cfg = tiny_config(ws, teacher_path);
    cfg.lr = 1e10f;  // guaranteed blow-up
    cfg.lr_final = 1e10f;
    cfg.epochs_stage1 = 1;
    const std::string out = ws.dir + "/diverged.ckpt";
    const TrainResult r = train(cfg, out);
    CHECK(r.nan_abort);
    // the checkpoint still loads and evaluates (restored weights)
    const ModelBundle b = load_bundle(out);
    const Cifar10 test_set = load_cifar10_binary(cfg.test_path);
    CHECK_NOTHROW(evaluate(b, test_set, cfg.norm, 8));
}

TEST_CASE("evaluate: duplicated correctly-classified image gives top1 = 1") {
    Workspace ws;
    // build a dataset of one image repeated; label forced to the model argmax
    ModelBundle b = build_bundle(tiny_arch(), 21);
    b.prior.compute_support();
    b.tables = freeze(b.prior);
    refresh_digest(b);

    const Cifar10 base = load_cifar10_binary(ws.dir + "/test.bin");
    NormStats norm;
    Tensor img({3, 32, 32});
    write_image(base, 0, norm, img.data());
    const Tensor latent = decompress(b, compress(b, img).cf);
    const Tensor logits = classifier_forward(b, decoder_forward(b, latent));
    int arg = 0;
    for (int k = 1; k < 10; ++k)
        if (logits.data()[k] > logits.data()[arg]) arg = k;

    const std::string dup_path = ws.dir + "/dup.bin";
    {
        std::ofstream f(dup_path, std::ios::binary | std::ios::trunc);
        std::vector<uint8_t> rec(Cifar10::kRecordBytes);
        rec[0] = uint8_t(arg);
        std::memcpy(rec.data() + 1, base.pixels.data(), Cifar10::kImageBytes);
        for (int i = 0; i < 10; ++i)
            f.write(reinterpret_cast<const char*>(rec.data()), Cifar10::kRecordBytes);
    }
    const Cifar10 dup = load_cifar10_binary(dup_path);
    const EvalResult r = evaluate(b, dup, norm, 0);
    CHECK(r.top1 == 1.0);
    CHECK(r.records.size() == 10);
    // bpp is bits/1024 per image for 32x32 inputs
    double mean_bits = 0;
    for (const auto& rec : r.records) mean_bits += double(rec.bits);
    mean_bits /= 10.0;
    CHECK(r.bpp == doctest::Approx(mean_bits / 1024.0));

    const EvalResult r2 = evaluate(b, dup, norm, 0);
    CHECK(r.bpp == r2.bpp);
    CHECK(r.top1 == r2.top1);
    std::remove(dup_path.c_str());
}

TEST_CASE("train config JSON round-trip") {
    TrainConfig cfg;
    cfg.lambda_rate = 0.3;
    cfg.strategy = Strategy::two_stage;
    cfg.setting = Setting::cls_fixed;
    cfg.stage2_include_mse = true;
    cfg.train_path = "a.bin";
    const auto j = cfg.to_json();
    const TrainConfig back = TrainConfig::from_json(j);
    CHECK(back.lambda_rate == 0.3);
    CHECK(back.strategy == Strategy::two_stage);
    CHECK(back.setting == Setting::cls_fixed);
    CHECK(back.stage2_include_mse);
    CHECK(back.train_path == "a.bin");

    TrainConfig bad;
    bad.lambda_rate = -1;
    CHECK_THROWS_AS(bad.validate(), config_error);
    TrainConfig bad2;
    bad2.strategy = Strategy::two_stage;
    bad2.epochs_stage2 = 0;
    CHECK_THROWS_AS(bad2.validate(), config_error);
}
