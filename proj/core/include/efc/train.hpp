#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "efc/dataset.hpp"
#include "efc/model.hpp"
#include "efc/optim.hpp"

namespace efc {

enum class Strategy { single_stage, two_stage };
enum class Setting { joint, cls_fixed };

std::string strategy_name(Strategy s);
Strategy strategy_from(const std::string& name);
std::string setting_name(Setting s);
Setting setting_from(const std::string& name);

struct TrainConfig {
    double lambda_rate = 1.0;  // rate weight in the training objective
    Strategy strategy = Strategy::single_stage;
    Setting setting = Setting::joint;
    int epochs_stage1 = 8;  // single_stage uses only this count
    int epochs_stage2 = 4;
    int batch_size = 128;
    uint64_t seed = 1;
    std::string train_path, test_path, teacher_path;
    ArchConfig arch;
    float lr = 1e-3f;
    float lr_final = 1e-5f;
    float temperature = 1.0f;
    // Whether stage 2 of the two-stage strategy keeps the feature-MSE term
    // in its objective (off by default).
    bool stage2_include_mse = false;
    NormStats norm;
    bool augment = true;
    int eval_subset = 512;    // images per per-epoch eval (0 = full test set)
    std::string metrics_csv;  // optional per-epoch CSV log path

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    static TrainConfig from_json_file(const std::string& path);
};

// Training objective for one batch:
//   total = lambda * l_R + l_MSE + 0.5 * (l_KL + l_CE)
// l_R is rate in bits per pixel, l_MSE compares the decoded feature with the
// teacher stem, l_KL distills the teacher logits, l_CE is the label loss.
struct LossOutput {
    Tensor total;  // scalar on the tape
    double rate_bpp = 0, mse = 0, kl = 0, ce = 0;
};

LossOutput single_stage_loss(const Batch& batch, ModelBundle& bundle, double lambda,
                             QuantizeMode mode, float temperature, Rng* noise_rng, Tape* tape);

struct EpochMetrics {
    int epoch = 0;  // global epoch index, counting across stages
    double l_r = 0, l_mse = 0, l_kl = 0, l_ce = 0, total = 0;
    double eval_bpp = 0, eval_top1 = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

struct TrainResult {
    double final_bpp = 0;
    double final_top1 = 0;
    std::vector<EpochMetrics> history;
    bool nan_abort = false;
    int completed_epochs = 0;
};

// Runs the configured strategy and writes the checkpoint (with frozen CDF
// tables) to out_ckpt. On divergence the last completed epoch's weights are
// restored before saving.
TrainResult train(const TrainConfig& cfg, const std::string& out_ckpt);

struct TeacherTrainConfig {
    int epochs = 12;
    int batch_size = 128;
    uint64_t seed = 1;
    std::string train_path, test_path;
    ArchConfig arch;
    float lr = 1e-3f;
    float lr_final = 1e-5f;
    NormStats norm;
    bool augment = true;
    // keeps the reference network calibrated; 0 disables
    float label_smoothing = 0.1f;

    nlohmann::json to_json() const;
    static TeacherTrainConfig from_json(const nlohmann::json& j);
    static TeacherTrainConfig from_json_file(const std::string& path);
};

// Trains the teacher with plain cross entropy; returns held-out top-1.
double train_teacher(const TeacherTrainConfig& cfg, const std::string& out_ckpt);

}  // namespace efc
