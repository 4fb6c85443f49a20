#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "efc/errors.hpp"

namespace efc {

enum class EncoderKind { proposed, baseline5x5 };

std::string encoder_kind_name(EncoderKind k);
EncoderKind encoder_kind_from(const std::string& name);

// Serialized field names are part of the checkpoint format:
// {patch_size, num_res_blocks, enc_width, bottleneck_ch, dec_width, classes,
//  input_hw, encoder_kind}.
struct ArchConfig {
    int patch_size = 8;       // s: total downsampling of the proposed encoder
    int num_res_blocks = 4;   // N: encoder complexity knob
    int enc_width = 64;       // C_e
    int bottleneck_ch = 48;   // M
    int dec_width = 64;       // C_d
    int classes = 10;         // K
    int input_h = 32;
    int input_w = 32;
    EncoderKind encoder_kind = EncoderKind::proposed;

    void validate() const;
    int latent_h() const { return input_h / patch_size; }
    int latent_w() const { return input_w / patch_size; }
    // spatial size of the decoder output / teacher stem output (stride 4)
    int feature_h() const { return input_h / 4; }
    int feature_w() const { return input_w / 4; }

    nlohmann::json to_json() const;
    static ArchConfig from_json(const nlohmann::json& j);

    bool operator==(const ArchConfig&) const = default;
};

}  // namespace efc
