#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>

#include "efc/arch.hpp"
#include "efc/macs.hpp"
#include "efc/params.hpp"
#include "efc/prior.hpp"

namespace efc {

// Frozen reference network: stem (stride-4 feature extractor) + tail (the
// classifier topology shared with the student). Trained separately, then
// used as the distillation target.
struct TeacherModel {
    ArchConfig arch;  // dec_width/classes/input fields are the relevant ones
    ParamSet params;  // stem.*, tail.*
    uint64_t seed = 0;
};

// Encoder + factorized prior + decoder + classifier, plus the optional frozen
// teacher. The prior's tensors are registered in `params` (shared buffers),
// so the optimizer sees one flat parameter set.
struct ModelBundle {
    ArchConfig arch;
    uint64_t seed = 0;
    ParamSet params;  // encoder.*, prior.*, decoder.*, classifier.*
    FactorizedPrior prior;
    std::optional<CdfTableSet> tables;  // frozen entropy-coding tables
    std::shared_ptr<TeacherModel> teacher;
    // model_digest() snapshot; refresh_digest() after any weight mutation
    std::array<uint8_t, 16> digest{};

    bool has_tables() const { return tables.has_value(); }
};

ModelBundle build_bundle(const ArchConfig& arch, uint64_t seed);
TeacherModel build_teacher(const ArchConfig& arch, uint64_t seed);

// Copies teacher tail.* weights into classifier.* (both settings start the
// student classifier from the teacher's).
void init_classifier_from_teacher(ModelBundle& bundle, const TeacherModel& teacher);

// y = x + conv3x3(gelu(conv3x3(x))), padding 1, stride 1.
Tensor residual_block(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                      const Tensor& b2, Tape* tape = nullptr);

// images (B,3,H,W) or (3,H,W) -> latent (B,M,H/s,W/s)
Tensor encoder_forward(const ModelBundle& bundle, const Tensor& images, Tape* tape = nullptr);
// latent -> feature (B,C_d,H/4,W/4)
Tensor decoder_forward(const ModelBundle& bundle, const Tensor& y_hat, Tape* tape = nullptr);
// feature -> logits (B,K)
Tensor classifier_forward(const ModelBundle& bundle, const Tensor& feature, Tape* tape = nullptr);

struct TeacherOutput {
    Tensor stem_feature;  // (B,C_d,H/4,W/4), same shape as decoder_forward output
    Tensor logits;        // (B,K)
};
TeacherOutput teacher_forward(const TeacherModel& teacher, const Tensor& images,
                              Tape* tape = nullptr);

// Stem only, for objectives that never look at the teacher logits.
Tensor teacher_stem_forward(const TeacherModel& teacher, const Tensor& images,
                            Tape* tape = nullptr);

// Layer descriptions for the complexity model (count_macs).
std::vector<LayerInfo> encoder_layers(const ArchConfig& arch);
std::vector<LayerInfo> decoder_layers(const ArchConfig& arch);
std::vector<LayerInfo> classifier_layers(const ArchConfig& arch);

int64_t encoder_macs(const ArchConfig& arch);
int64_t decoder_macs(const ArchConfig& arch);
int64_t classifier_macs(const ArchConfig& arch);

// MD5 over the serialized config and every parameter (sorted by name,
// little-endian payload). Changes if any weight or config field changes.
std::array<uint8_t, 16> model_digest(const ModelBundle& bundle);

inline void refresh_digest(ModelBundle& bundle) { bundle.digest = model_digest(bundle); }

}  // namespace efc
