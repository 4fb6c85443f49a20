#include "efc/wire.hpp"

#include <cstring>

namespace efc {

bool frame_type_known(uint8_t type) {
    return type == frame_type::hello || type == frame_type::features ||
           type == frame_type::prediction || type == frame_type::error;
}

std::vector<uint8_t> frame_encode(uint8_t type, std::span<const uint8_t> payload) {
    if (!frame_type_known(type)) throw protocol_error("unknown frame type");
    std::vector<uint8_t> out;
    out.reserve(kFrameHeaderSize + payload.size());
    out.push_back(type);
    const uint32_t len = static_cast<uint32_t>(payload.size());
    out.push_back(static_cast<uint8_t>(len >> 24));  // big-endian length
    out.push_back(static_cast<uint8_t>(len >> 16));
    out.push_back(static_cast<uint8_t>(len >> 8));
    out.push_back(static_cast<uint8_t>(len));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

void FrameReader::fill(size_t need) {
    while (buf_.size() - pos_ < need) {
        uint8_t tmp[4096];
        const int64_t got = read_(tmp, sizeof(tmp));
        if (got <= 0) throw protocol_error("connection closed mid-frame");
        buf_.insert(buf_.end(), tmp, tmp + got);
    }
}

Frame FrameReader::next() {
    if (pos_ > 0 && pos_ == buf_.size()) {
        buf_.clear();
        pos_ = 0;
    }
    fill(kFrameHeaderSize);
    const uint8_t type = buf_[pos_];
    if (!frame_type_known(type))
        throw protocol_error("unknown frame type 0x" + std::to_string(type));
    const uint32_t len = (static_cast<uint32_t>(buf_[pos_ + 1]) << 24) |
                         (static_cast<uint32_t>(buf_[pos_ + 2]) << 16) |
                         (static_cast<uint32_t>(buf_[pos_ + 3]) << 8) |
                         static_cast<uint32_t>(buf_[pos_ + 4]);
    fill(kFrameHeaderSize + len);
    Frame f;
    f.type = type;
    f.payload.assign(buf_.begin() + static_cast<int64_t>(pos_ + kFrameHeaderSize),
                     buf_.begin() + static_cast<int64_t>(pos_ + kFrameHeaderSize + len));
    pos_ += kFrameHeaderSize + len;
    return f;
}

std::vector<uint8_t> prediction_encode(const Prediction& p) {
    std::vector<uint8_t> out;
    out.reserve(38);
    for (const auto& e : p.topk) {
        out.push_back(static_cast<uint8_t>(e.cls));
        out.push_back(static_cast<uint8_t>(e.cls >> 8));
        uint32_t bits;
        std::memcpy(&bits, &e.score, 4);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
    }
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(p.server_us >> (8 * i)));
    return out;
}

Prediction prediction_decode(std::span<const uint8_t> payload) {
    if (payload.size() != 38) throw protocol_error("prediction payload must be 38 bytes");
    Prediction p;
    size_t pos = 0;
    for (auto& e : p.topk) {
        e.cls = static_cast<uint16_t>(payload[pos] | (static_cast<uint16_t>(payload[pos + 1]) << 8));
        uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(payload[pos + 2 + i]) << (8 * i);
        std::memcpy(&e.score, &bits, 4);
        pos += 6;
    }
    p.server_us = 0;
    for (int i = 0; i < 8; ++i) p.server_us |= static_cast<uint64_t>(payload[pos + i]) << (8 * i);
    return p;
}

std::vector<uint8_t> error_encode(uint8_t code, const std::string& message) {
    std::vector<uint8_t> out;
    out.push_back(code);
    out.insert(out.end(), message.begin(), message.end());
    return out;
}

ErrorFrame error_decode(std::span<const uint8_t> payload) {
    if (payload.empty()) throw protocol_error("error payload must carry a code");
    ErrorFrame e;
    e.code = payload[0];
    e.message.assign(payload.begin() + 1, payload.end());
    return e;
}

std::pair<std::string, uint16_t> split_address(const std::string& addr) {
    const size_t colon = addr.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= addr.size())
        throw config_error("address must be HOST:PORT, got '" + addr + "'");
    const std::string host = addr.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(addr.substr(colon + 1));
    } catch (...) {
        throw config_error("bad port in address '" + addr + "'");
    }
    if (port < 0 || port > 65535) throw config_error("port out of range in '" + addr + "'");
    return {host, static_cast<uint16_t>(port)};
}

}  // namespace efc
