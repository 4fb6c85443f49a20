#include "efc/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "efc/checkpoint.hpp"
#include "efc/eval.hpp"
#include "efc/losses.hpp"
#include "efc/ops.hpp"

namespace efc {
namespace {

using nlohmann::json;

enum class StageKind { single, stage1, stage2 };

LossOutput stage_loss(const Batch& batch, ModelBundle& bundle, const TrainConfig& cfg,
                      StageKind stage, Rng* noise_rng, Tape* tape) {
    if (!bundle.teacher) throw config_error("missing teacher in bundle");
    const auto& arch = bundle.arch;
    const int64_t b = batch.images.dim(0);
    const double inv_px = 1.0 / (static_cast<double>(b) * arch.input_h * arch.input_w);

    LossOutput out;
    Tensor y = encoder_forward(bundle, batch.images, tape);

    if (stage == StageKind::stage2) {
        // encoder and prior are frozen here; train on deterministic latents
        Tensor yq = quantize(y, QuantizeMode::round, nullptr, tape);
        Tensor rate = rate_bits(bundle.prior, yq, nullptr);  // logging only
        out.rate_bpp = rate.item() * inv_px;
        Tensor feat = decoder_forward(bundle, yq, tape);
        TeacherOutput t = teacher_forward(*bundle.teacher, batch.images, nullptr);
        Tensor l_mse = mse(feat, t.stem_feature, cfg.stage2_include_mse ? tape : nullptr);
        Tensor s_logits = classifier_forward(bundle, feat, tape);
        Tensor l_kl = kl_teacher_student(t.logits, s_logits, cfg.temperature, tape);
        Tensor l_ce = cross_entropy(s_logits, batch.labels, tape);
        out.mse = l_mse.item();
        out.kl = l_kl.item();
        out.ce = l_ce.item();
        std::vector<std::pair<float, Tensor>> terms{{0.5f, l_kl}, {0.5f, l_ce}};
        if (cfg.stage2_include_mse) terms.push_back({1.0f, l_mse});
        out.total = weighted_sum(terms, tape);
        return out;
    }

    Tensor yq = quantize(y, QuantizeMode::noise, noise_rng, tape);
    Tensor rate = rate_bits(bundle.prior, yq, tape);
    Tensor l_r = weighted_sum({{static_cast<float>(inv_px), rate}}, tape);
    out.rate_bpp = l_r.item();
    Tensor feat = decoder_forward(bundle, yq, tape);

    if (stage == StageKind::stage1) {
        Tensor t_stem = teacher_stem_forward(*bundle.teacher, batch.images, nullptr);
        Tensor l_mse = mse(feat, t_stem, tape);
        out.mse = l_mse.item();
        out.total = weighted_sum({{static_cast<float>(cfg.lambda_rate), l_r}, {1.0f, l_mse}}, tape);
        return out;
    }

    TeacherOutput t = teacher_forward(*bundle.teacher, batch.images, nullptr);
    Tensor l_mse = mse(feat, t.stem_feature, tape);
    Tensor s_logits = classifier_forward(bundle, feat, tape);
    Tensor l_kl = kl_teacher_student(t.logits, s_logits, cfg.temperature, tape);
    Tensor l_ce = cross_entropy(s_logits, batch.labels, tape);
    out.mse = l_mse.item();
    out.kl = l_kl.item();
    out.ce = l_ce.item();
    out.total = weighted_sum({{static_cast<float>(cfg.lambda_rate), l_r},
                              {1.0f, l_mse},
                              {0.5f, l_kl},
                              {0.5f, l_ce}},
                             tape);
    return out;
}

std::vector<std::vector<float>> snapshot_params(const ParamSet& ps) {
    std::vector<std::vector<float>> snap;
    snap.reserve(ps.size());
    for (const auto& p : ps.all())
        snap.emplace_back(p.tensor.data(), p.tensor.data() + p.tensor.numel());
    return snap;
}

void restore_params(ParamSet& ps, const std::vector<std::vector<float>>& snap) {
    auto& all = ps.all();
    for (size_t i = 0; i < all.size(); ++i)
        std::copy(snap[i].begin(), snap[i].end(), all[i].tensor.data());
}

void refreeze(ModelBundle& bundle) {
    bundle.prior.compute_support();
    bundle.tables = freeze(bundle.prior);
    refresh_digest(bundle);
}

void configure_trainable(ModelBundle& bundle, StageKind stage, Setting setting) {
    bundle.params.set_trainable("", true);
    if (stage == StageKind::stage1) {
        bundle.params.set_trainable("classifier.", false);
    } else if (stage == StageKind::stage2) {
        bundle.params.set_trainable("encoder.", false);
        bundle.params.set_trainable("prior.", false);
    }
    if (setting == Setting::cls_fixed) bundle.params.set_trainable("classifier.", false);
}

}  // namespace

std::string strategy_name(Strategy s) {
    return s == Strategy::single_stage ? "single_stage" : "two_stage";
}

Strategy strategy_from(const std::string& name) {
    if (name == "single_stage") return Strategy::single_stage;
    if (name == "two_stage") return Strategy::two_stage;
    throw config_error("unknown strategy: " + name);
}

std::string setting_name(Setting s) { return s == Setting::joint ? "joint" : "cls_fixed"; }

Setting setting_from(const std::string& name) {
    if (name == "joint") return Setting::joint;
    if (name == "cls_fixed") return Setting::cls_fixed;
    throw config_error("unknown setting: " + name);
}

void TrainConfig::validate() const {
    if (!(lambda_rate > 0)) throw config_error("lambda must be > 0");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (epochs_stage1 < 1) throw config_error("epochs_stage1 must be >= 1");
    if (strategy == Strategy::two_stage && epochs_stage2 < 1)
        throw config_error("two_stage requires epochs_stage2 >= 1");
    if (temperature <= 0) throw config_error("temperature must be > 0");
    arch.validate();
}

json TrainConfig::to_json() const {
    return json{{"lambda", lambda_rate},
                {"strategy", strategy_name(strategy)},
                {"setting", setting_name(setting)},
                {"epochs_stage1", epochs_stage1},
                {"epochs_stage2", epochs_stage2},
                {"batch_size", batch_size},
                {"seed", seed},
                {"train_path", train_path},
                {"test_path", test_path},
                {"teacher_path", teacher_path},
                {"arch", arch.to_json()},
                {"lr", lr},
                {"lr_final", lr_final},
                {"temperature", temperature},
                {"stage2_include_mse", stage2_include_mse},
                {"norm_mean", norm.mean},
                {"norm_std", norm.stddev},
                {"augment", augment},
                {"eval_subset", eval_subset},
                {"metrics_csv", metrics_csv}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    try {
        c.lambda_rate = j.at("lambda").get<double>();
        if (j.contains("strategy")) c.strategy = strategy_from(j.at("strategy").get<std::string>());
        if (j.contains("setting")) c.setting = setting_from(j.at("setting").get<std::string>());
        if (j.contains("epochs_stage1")) c.epochs_stage1 = j.at("epochs_stage1").get<int>();
        if (j.contains("epochs_stage2")) c.epochs_stage2 = j.at("epochs_stage2").get<int>();
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
        if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
        c.train_path = j.value("train_path", std::string{});
        c.test_path = j.value("test_path", std::string{});
        c.teacher_path = j.value("teacher_path", std::string{});
        if (j.contains("arch")) c.arch = ArchConfig::from_json(j.at("arch"));
        if (j.contains("lr")) c.lr = j.at("lr").get<float>();
        if (j.contains("lr_final")) c.lr_final = j.at("lr_final").get<float>();
        if (j.contains("temperature")) c.temperature = j.at("temperature").get<float>();
        if (j.contains("stage2_include_mse"))
            c.stage2_include_mse = j.at("stage2_include_mse").get<bool>();
        if (j.contains("norm_mean")) c.norm.mean = j.at("norm_mean").get<std::array<float, 3>>();
        if (j.contains("norm_std")) c.norm.stddev = j.at("norm_std").get<std::array<float, 3>>();
        if (j.contains("augment")) c.augment = j.at("augment").get<bool>();
        if (j.contains("eval_subset")) c.eval_subset = j.at("eval_subset").get<int>();
        c.metrics_csv = j.value("metrics_csv", std::string{});
    } catch (const json::exception& e) {
        throw format_error(std::string("bad train config: ") + e.what());
    }
    return c;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open config file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw format_error(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

LossOutput single_stage_loss(const Batch& batch, ModelBundle& bundle, double lambda,
                             QuantizeMode mode, float temperature, Rng* noise_rng, Tape* tape) {
    TrainConfig cfg;
    cfg.lambda_rate = lambda;
    cfg.temperature = temperature;
    if (mode == QuantizeMode::round)
        throw config_error("single_stage_loss: training mode must be noise");
    return stage_loss(batch, bundle, cfg, StageKind::single, noise_rng, tape);
}

std::string metrics_csv_header() { return "epoch,l_R,l_MSE,l_KL,l_CE,total,eval_bpp,eval_top1"; }

std::string metrics_csv_row(const EpochMetrics& m) {
    std::ostringstream os;
    os.precision(8);
    os << m.epoch << ',' << m.l_r << ',' << m.l_mse << ',' << m.l_kl << ',' << m.l_ce << ','
       << m.total << ',' << m.eval_bpp << ',' << m.eval_top1;
    return os.str();
}

TrainResult train(const TrainConfig& cfg, const std::string& out_ckpt) {
    cfg.validate();
    const Cifar10 train_set = load_cifar10_binary(cfg.train_path);
    const Cifar10 test_set = load_cifar10_binary(cfg.test_path);

    ModelBundle bundle = build_bundle(cfg.arch, cfg.seed);
    bundle.teacher = std::make_shared<TeacherModel>(load_teacher(cfg.teacher_path));
    init_classifier_from_teacher(bundle, *bundle.teacher);

    std::ofstream csv;
    if (!cfg.metrics_csv.empty()) {
        csv.open(cfg.metrics_csv, std::ios::trunc);
        if (!csv) throw io_error("cannot open metrics csv " + cfg.metrics_csv);
        csv << metrics_csv_header() << '\n';
    }

    struct StagePlan {
        StageKind kind;
        int epochs;
    };
    std::vector<StagePlan> plan;
    if (cfg.strategy == Strategy::single_stage) {
        plan.push_back({StageKind::single, cfg.epochs_stage1});
    } else {
        plan.push_back({StageKind::stage1, cfg.epochs_stage1});
        plan.push_back({StageKind::stage2, cfg.epochs_stage2});
    }

    Rng rng(cfg.seed);
    TrainResult result;
    auto last_good = snapshot_params(bundle.params);
    int global_epoch = 0;

    for (const auto& stage : plan) {
        configure_trainable(bundle, stage.kind, cfg.setting);
        Adam opt({cfg.lr, 0.9f, 0.999f, 1e-8f});
        const int64_t steps_per_epoch =
            (train_set.count + cfg.batch_size - 1) / cfg.batch_size;
        const int64_t total_steps = steps_per_epoch * stage.epochs;
        int64_t step = 0;

        for (int e = 0; e < stage.epochs; ++e, ++global_epoch) {
            std::vector<int64_t> order(static_cast<size_t>(train_set.count));
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(order);

            EpochMetrics em;
            em.epoch = global_epoch;
            int64_t nb = 0;
            bool aborted = false;
            for (int64_t b0 = 0; b0 < train_set.count; b0 += cfg.batch_size) {
                const int64_t bend = std::min<int64_t>(b0 + cfg.batch_size, train_set.count);
                std::vector<int64_t> idx(order.begin() + b0, order.begin() + bend);
                Batch batch = make_batch(train_set, idx, cfg.norm, cfg.augment, rng);

                bundle.params.zero_grad();
                Tape tape;
                try {
                    LossOutput lo = stage_loss(batch, bundle, cfg, stage.kind, &rng, &tape);
                    opt.set_lr(cosine_lr(cfg.lr, cfg.lr_final, step, total_steps));
                    tape.backward(lo.total);
                    opt.step(bundle.params);
                    em.l_r += lo.rate_bpp;
                    em.l_mse += lo.mse;
                    em.l_kl += lo.kl;
                    em.l_ce += lo.ce;
                    em.total += lo.total.item();
                } catch (const numeric_error&) {
                    restore_params(bundle.params, last_good);
                    result.nan_abort = true;
                    aborted = true;
                    break;
                }
                tape.clear();
                ++step;
                ++nb;
            }
            if (aborted) break;

            em.l_r /= static_cast<double>(nb);
            em.l_mse /= static_cast<double>(nb);
            em.l_kl /= static_cast<double>(nb);
            em.l_ce /= static_cast<double>(nb);
            em.total /= static_cast<double>(nb);

            last_good = snapshot_params(bundle.params);
            refreeze(bundle);
            const EvalResult er = evaluate(bundle, test_set, cfg.norm, cfg.eval_subset);
            em.eval_bpp = er.bpp;
            em.eval_top1 = er.top1;
            result.history.push_back(em);
            result.completed_epochs = global_epoch + 1;
            if (csv.is_open()) csv << metrics_csv_row(em) << '\n';
        }
        if (result.nan_abort) break;
    }

    refreeze(bundle);
    const EvalResult final_eval = evaluate(bundle, test_set, cfg.norm, 0);
    result.final_bpp = final_eval.bpp;
    result.final_top1 = final_eval.top1;
    save_bundle(bundle, out_ckpt);
    return result;
}

json TeacherTrainConfig::to_json() const {
    return json{{"epochs", epochs},     {"batch_size", batch_size},
                {"seed", seed},         {"train_path", train_path},
                {"test_path", test_path}, {"arch", arch.to_json()},
                {"lr", lr},             {"lr_final", lr_final},
                {"norm_mean", norm.mean}, {"norm_std", norm.stddev},
                {"augment", augment},   {"label_smoothing", label_smoothing}};
}

TeacherTrainConfig TeacherTrainConfig::from_json(const json& j) {
    TeacherTrainConfig c;
    try {
        if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
        if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
        c.train_path = j.value("train_path", std::string{});
        c.test_path = j.value("test_path", std::string{});
        if (j.contains("arch")) c.arch = ArchConfig::from_json(j.at("arch"));
        if (j.contains("lr")) c.lr = j.at("lr").get<float>();
        if (j.contains("lr_final")) c.lr_final = j.at("lr_final").get<float>();
        if (j.contains("norm_mean")) c.norm.mean = j.at("norm_mean").get<std::array<float, 3>>();
        if (j.contains("norm_std")) c.norm.stddev = j.at("norm_std").get<std::array<float, 3>>();
        if (j.contains("augment")) c.augment = j.at("augment").get<bool>();
        if (j.contains("label_smoothing")) c.label_smoothing = j.at("label_smoothing").get<float>();
    } catch (const json::exception& e) {
        throw format_error(std::string("bad teacher config: ") + e.what());
    }
    return c;
}

TeacherTrainConfig TeacherTrainConfig::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open config file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw format_error(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

double train_teacher(const TeacherTrainConfig& cfg, const std::string& out_ckpt) {
    if (cfg.epochs < 1) throw config_error("teacher epochs must be >= 1");
    cfg.arch.validate();
    const Cifar10 train_set = load_cifar10_binary(cfg.train_path);
    const Cifar10 test_set = load_cifar10_binary(cfg.test_path);

    TeacherModel teacher = build_teacher(cfg.arch, cfg.seed);
    Rng rng(cfg.seed);
    Adam opt({cfg.lr, 0.9f, 0.999f, 1e-8f});
    const int64_t steps_per_epoch = (train_set.count + cfg.batch_size - 1) / cfg.batch_size;
    const int64_t total_steps = steps_per_epoch * cfg.epochs;
    int64_t step = 0;

    for (int e = 0; e < cfg.epochs; ++e) {
        std::vector<int64_t> order(static_cast<size_t>(train_set.count));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        for (int64_t b0 = 0; b0 < train_set.count; b0 += cfg.batch_size) {
            const int64_t bend = std::min<int64_t>(b0 + cfg.batch_size, train_set.count);
            std::vector<int64_t> idx(order.begin() + b0, order.begin() + bend);
            Batch batch = make_batch(train_set, idx, cfg.norm, cfg.augment, rng);

            teacher.params.zero_grad();
            Tape tape;
            TeacherOutput out = teacher_forward(teacher, batch.images, &tape);
            Tensor loss = cfg.label_smoothing > 0.0f
                              ? cross_entropy_smoothed(out.logits, batch.labels, cfg.label_smoothing, &tape)
                              : cross_entropy(out.logits, batch.labels, &tape);
            opt.set_lr(cosine_lr(cfg.lr, cfg.lr_final, step, total_steps));
            tape.backward(loss);
            opt.step(teacher.params);
            tape.clear();
            ++step;
        }
    }

    // held-out accuracy
    int64_t correct = 0;
    constexpr int64_t kChunk = 256;
    constexpr int64_t stride = 3 * Cifar10::kSide * Cifar10::kSide;
    for (int64_t b0 = 0; b0 < test_set.count; b0 += kChunk) {
        const int64_t bs = std::min(kChunk, test_set.count - b0);
        Tensor images({bs, 3, Cifar10::kSide, Cifar10::kSide});
        for (int64_t i = 0; i < bs; ++i)
            write_image(test_set, b0 + i, cfg.norm, images.data() + i * stride);
        TeacherOutput out = teacher_forward(teacher, images, nullptr);
        for (int64_t i = 0; i < bs; ++i) {
            const float* row = out.logits.data() + i * cfg.arch.classes;
            int arg = 0;
            for (int k = 1; k < cfg.arch.classes; ++k)
                if (row[k] > row[arg]) arg = k;
            correct += arg == test_set.labels[static_cast<size_t>(b0 + i)] ? 1 : 0;
        }
    }

    teacher.params.set_trainable("", false);
    save_teacher(teacher, out_ckpt);
    return static_cast<double>(correct) / static_cast<double>(test_set.count);
}

}  // namespace efc
