#include "efc/codec.hpp"

#include <cmath>
#include <cstring>

namespace efc {
namespace {

void put_u16(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(static_cast<uint8_t>(x));
    v.push_back(static_cast<uint8_t>(x >> 8));
}

void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back(static_cast<uint8_t>(x >> (8 * i)));
}

uint16_t get_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (static_cast<uint16_t>(p[1]) << 8));
}

uint32_t get_u32(const uint8_t* p) {
    uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<uint32_t>(p[i]) << (8 * i);
    return x;
}

}  // namespace

std::vector<uint8_t> CompressedFeature::serialize() const {
    std::vector<uint8_t> out;
    out.reserve(byte_size());
    out.insert(out.end(), {'E', 'F', 'B', 'S'});
    out.push_back(kVersion);
    out.insert(out.end(), digest.begin(), digest.end());
    out.push_back(channels);
    put_u16(out, h_lat);
    put_u16(out, w_lat);
    put_u16(out, img_h);
    put_u16(out, img_w);
    put_u32(out, static_cast<uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

CompressedFeature CompressedFeature::parse(std::span<const uint8_t> bytes) {
    if (bytes.size() < kHeaderSize) throw format_error("compressed feature: header truncated");
    if (std::memcmp(bytes.data(), "EFBS", 4) != 0)
        throw format_error("compressed feature: bad magic");
    if (bytes[4] != kVersion)
        throw format_error("compressed feature: unsupported version " + std::to_string(bytes[4]));
    CompressedFeature cf;
    std::copy(bytes.begin() + 5, bytes.begin() + 21, cf.digest.begin());
    cf.channels = bytes[21];
    cf.h_lat = get_u16(bytes.data() + 22);
    cf.w_lat = get_u16(bytes.data() + 24);
    cf.img_h = get_u16(bytes.data() + 26);
    cf.img_w = get_u16(bytes.data() + 28);
    const uint32_t plen = get_u32(bytes.data() + 30);
    if (bytes.size() != kHeaderSize + plen)
        throw format_error("compressed feature: payload length mismatch");
    if (cf.channels == 0 || cf.h_lat == 0 || cf.w_lat == 0 || cf.img_h == 0 || cf.img_w == 0)
        throw format_error("compressed feature: empty dimensions");
    cf.payload.assign(bytes.begin() + kHeaderSize, bytes.end());
    return cf;
}

std::vector<int32_t> symbol_channels(int64_t channels, int64_t hw) {
    std::vector<int32_t> ch(static_cast<size_t>(channels * hw));
    for (int64_t c = 0; c < channels; ++c)
        std::fill(ch.begin() + c * hw, ch.begin() + (c + 1) * hw, static_cast<int32_t>(c));
    return ch;
}

int64_t latent_to_symbols(const Tensor& latent, const CdfTableSet& tables,
                          std::vector<int32_t>& symbols) {
    if (latent.ndim() != 3) throw config_error("latent_to_symbols expects (C,h,w)");
    const int64_t ch = latent.dim(0);
    const int64_t hw = latent.dim(1) * latent.dim(2);
    if (static_cast<size_t>(ch) != tables.tables.size())
        throw config_error("latent channels != table count");
    symbols.resize(static_cast<size_t>(ch * hw));
    int64_t clamped = 0;
    const float* lp = latent.data();
    for (int64_t i = 0; i < ch * hw; ++i) {
        const CdfTable& t = tables.tables[static_cast<size_t>(i / hw)];
        int32_t v = static_cast<int32_t>(std::round(lp[i]));  // half away from zero, same as quantize()
        if (v < t.y_min) {
            v = t.y_min;
            ++clamped;
        } else if (v > t.y_max) {
            v = t.y_max;
            ++clamped;
        }
        symbols[static_cast<size_t>(i)] = v;
    }
    return clamped;
}

Tensor symbols_to_latent(const std::vector<int32_t>& symbols, int64_t channels, int64_t h,
                         int64_t w) {
    if (static_cast<int64_t>(symbols.size()) != channels * h * w)
        throw config_error("symbols_to_latent: size mismatch");
    Tensor t({channels, h, w});
    float* p = t.data();
    for (size_t i = 0; i < symbols.size(); ++i) p[i] = static_cast<float>(symbols[i]);
    return t;
}

CompressResult compress(const ModelBundle& bundle, const Tensor& image) {
    if (!bundle.has_tables())
        throw config_error("compress: bundle has no frozen tables (train or freeze first)");
    if (image.ndim() != 3 || image.dim(0) != 3 || image.dim(1) != bundle.arch.input_h ||
        image.dim(2) != bundle.arch.input_w)
        throw config_error("compress: image must be (3," + std::to_string(bundle.arch.input_h) +
                           "," + std::to_string(bundle.arch.input_w) + ")");

    Tensor latent = encoder_forward(bundle, image, nullptr);
    std::vector<int32_t> symbols;
    const int64_t clamped = latent_to_symbols(latent, *bundle.tables, symbols);
    const int64_t hw = latent.dim(1) * latent.dim(2);
    const auto channels = symbol_channels(latent.dim(0), hw);

    CompressResult res;
    res.clamped = clamped;
    res.cf.digest = bundle.digest;
    res.cf.channels = static_cast<uint8_t>(latent.dim(0));
    res.cf.h_lat = static_cast<uint16_t>(latent.dim(1));
    res.cf.w_lat = static_cast<uint16_t>(latent.dim(2));
    res.cf.img_h = static_cast<uint16_t>(bundle.arch.input_h);
    res.cf.img_w = static_cast<uint16_t>(bundle.arch.input_w);
    res.cf.payload = range_encode(symbols, *bundle.tables, channels);
    return res;
}

Tensor decompress(const ModelBundle& bundle, const CompressedFeature& cf) {
    if (!bundle.has_tables()) throw config_error("decompress: bundle has no frozen tables");
    if (cf.digest != bundle.digest)
        throw config_error("incompatible model: bitstream digest does not match this checkpoint");
    if (cf.channels != bundle.arch.bottleneck_ch || cf.h_lat != bundle.arch.latent_h() ||
        cf.w_lat != bundle.arch.latent_w())
        throw format_error("compressed feature: latent shape does not match the model");

    const int64_t hw = static_cast<int64_t>(cf.h_lat) * cf.w_lat;
    const auto channels = symbol_channels(cf.channels, hw);
    const auto symbols = range_decode(cf.payload, cf.symbol_count(), *bundle.tables, channels);
    return symbols_to_latent(symbols, cf.channels, cf.h_lat, cf.w_lat);
}

}  // namespace efc
