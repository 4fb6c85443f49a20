#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace efc {

// RFC 1321 MD5. Used as the 16-byte model digest; collision resistance is
// irrelevant here, the digest only detects model skew between edge and cloud.
class Md5 {
public:
    Md5();
    void update(const void* data, size_t len);
    std::array<uint8_t, 16> finish();

    static std::array<uint8_t, 16> of(std::span<const uint8_t> bytes);

private:
    void process_block(const uint8_t* block);
    uint32_t a_, b_, c_, d_;
    uint64_t total_ = 0;
    uint8_t buf_[64];
    size_t buf_len_ = 0;
};

std::string hex_digest(const std::array<uint8_t, 16>& d);

}  // namespace efc
