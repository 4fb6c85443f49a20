#include "efc/arch.hpp"

namespace efc {

std::string encoder_kind_name(EncoderKind k) {
    switch (k) {
        case EncoderKind::proposed: return "proposed";
        case EncoderKind::baseline5x5: return "baseline5x5";
    }
    throw config_error("unknown encoder kind");
}

EncoderKind encoder_kind_from(const std::string& name) {
    if (name == "proposed") return EncoderKind::proposed;
    if (name == "baseline5x5") return EncoderKind::baseline5x5;
    throw config_error("unknown encoder_kind: " + name);
}

void ArchConfig::validate() const {
    if (patch_size != 4 && patch_size != 8) throw config_error("patch_size must be 4 or 8");
    if (num_res_blocks < 0) throw config_error("num_res_blocks must be >= 0");
    if (enc_width < 1 || bottleneck_ch < 1 || dec_width < 1 || classes < 1)
        throw config_error("widths and class count must be >= 1");
    if (bottleneck_ch > 255) throw config_error("bottleneck_ch must fit in one byte (<= 255)");
    if (input_h < 4 || input_w < 4) throw config_error("input too small");
    if (input_h % patch_size != 0 || input_w % patch_size != 0)
        throw config_error("input extents must be divisible by patch_size");
    if (input_h % 8 != 0 || input_w % 8 != 0)
        throw config_error("input extents must be divisible by 8");
    if (encoder_kind == EncoderKind::baseline5x5 && patch_size != 4)
        throw config_error("baseline5x5 downsamples 4x; set patch_size=4");
}

nlohmann::json ArchConfig::to_json() const {
    return nlohmann::json{
        {"patch_size", patch_size},
        {"num_res_blocks", num_res_blocks},
        {"enc_width", enc_width},
        {"bottleneck_ch", bottleneck_ch},
        {"dec_width", dec_width},
        {"classes", classes},
        {"input_hw", {input_h, input_w}},
        {"encoder_kind", encoder_kind_name(encoder_kind)},
    };
}

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
    ArchConfig c;
    try {
        c.patch_size = j.at("patch_size").get<int>();
        c.num_res_blocks = j.at("num_res_blocks").get<int>();
        c.enc_width = j.at("enc_width").get<int>();
        c.bottleneck_ch = j.at("bottleneck_ch").get<int>();
        c.dec_width = j.at("dec_width").get<int>();
        c.classes = j.at("classes").get<int>();
        c.input_h = j.at("input_hw").at(0).get<int>();
        c.input_w = j.at("input_hw").at(1).get<int>();
        c.encoder_kind = encoder_kind_from(j.at("encoder_kind").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("bad arch config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace efc
