#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "efc/errors.hpp"

namespace efc {

// Versioned container for one range-coded latent.
//
// Layout (all multi-byte integers little-endian):
//   "EFBS" (4B) | u8 version=1 | 16B model digest | u8 channels
//   | u16 h_lat | u16 w_lat | u16 img_h | u16 img_w | u32 payload length
//   | payload bytes (range-coded symbols, channel-major raster order)
struct CompressedFeature {
    static constexpr uint8_t kVersion = 1;
    static constexpr size_t kHeaderSize = 34;

    std::array<uint8_t, 16> digest{};
    uint8_t channels = 0;
    uint16_t h_lat = 0, w_lat = 0;
    uint16_t img_h = 0, img_w = 0;
    std::vector<uint8_t> payload;

    int64_t symbol_count() const {
        return static_cast<int64_t>(channels) * h_lat * w_lat;
    }
    size_t byte_size() const { return kHeaderSize + payload.size(); }

    std::vector<uint8_t> serialize() const;
    static CompressedFeature parse(std::span<const uint8_t> bytes);  // format_error on malformed input

    // bits of the full container (header + payload) per source pixel
    double bpp() const {
        return static_cast<double>(byte_size()) * 8.0 /
               (static_cast<double>(img_h) * static_cast<double>(img_w));
    }
};

}  // namespace efc
