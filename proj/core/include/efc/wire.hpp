#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "efc/errors.hpp"

namespace efc {

// Frame: type (u8) | length (u32 big-endian) | payload (length bytes).
//
// Types: 0x01 HELLO (16-byte model digest), 0x02 FEATURES (one serialized
// CompressedFeature), 0x03 PREDICTION, 0x7F ERROR (u8 code + UTF-8 message).
// Error codes: 1 digest mismatch, 2 malformed bitstream, 3 protocol error.
namespace frame_type {
constexpr uint8_t hello = 0x01;
constexpr uint8_t features = 0x02;
constexpr uint8_t prediction = 0x03;
constexpr uint8_t error = 0x7F;
}  // namespace frame_type

constexpr size_t kFrameHeaderSize = 5;

struct Frame {
    uint8_t type = 0;
    std::vector<uint8_t> payload;
};

bool frame_type_known(uint8_t type);

std::vector<uint8_t> frame_encode(uint8_t type, std::span<const uint8_t> payload);

// Incremental decoder over a byte source; buffers partial reads until a full
// frame is available. The read callback returns the number of bytes read
// (0 means EOF). Throws protocol_error on EOF mid-frame or an unknown type.
class FrameReader {
public:
    using ReadFn = std::function<int64_t(uint8_t* buf, size_t cap)>;
    explicit FrameReader(ReadFn fn) : read_(std::move(fn)) {}
    Frame next();

private:
    void fill(size_t need);
    ReadFn read_;
    std::vector<uint8_t> buf_;
    size_t pos_ = 0;
};

// Top-5 class probabilities plus the server-side decode+classify wall time.
// Payload: 5 x (u16 class LE | f32 score LE) | u64 microseconds LE = 38 bytes.
struct Prediction {
    struct Entry {
        uint16_t cls = 0;
        float score = 0.0f;
    };
    std::array<Entry, 5> topk{};
    uint64_t server_us = 0;

    uint16_t top1() const { return topk[0].cls; }
};

std::vector<uint8_t> prediction_encode(const Prediction& p);
Prediction prediction_decode(std::span<const uint8_t> payload);

struct ErrorFrame {
    uint8_t code = 0;
    std::string message;
};

std::vector<uint8_t> error_encode(uint8_t code, const std::string& message);
ErrorFrame error_decode(std::span<const uint8_t> payload);

// "host:port" -> pair; throws config_error on malformed input.
std::pair<std::string, uint16_t> split_address(const std::string& addr);

}  // namespace efc
