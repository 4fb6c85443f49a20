#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "efc/errors.hpp"
#include "efc/prior.hpp"

namespace efc {

// 32-bit renormalizing range coder with 16-bit cumulative frequencies.
// Byte-oriented carry handling, so streams are identical on any machine.

class RangeEncoder {
public:
    // [cum_lo, cum_hi) out of total 2^16; cum_hi > cum_lo required.
    void encode(uint32_t cum_lo, uint32_t cum_hi);
    std::vector<uint8_t> finish();

private:
    void shift_low();
    std::vector<uint8_t> out_;
    uint64_t low_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    uint8_t cache_ = 0;
    uint64_t cache_size_ = 1;
    bool finished_ = false;
};

class RangeDecoder {
public:
    explicit RangeDecoder(std::span<const uint8_t> bytes);
    // cumulative frequency of the next symbol, in [0, 2^16)
    uint32_t decode_freq();
    // consume the symbol whose interval is [cum_lo, cum_hi)
    void decode_update(uint32_t cum_lo, uint32_t cum_hi);

private:
    uint8_t next_byte();
    std::span<const uint8_t> in_;
    size_t pos_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    uint32_t code_ = 0;
};

struct EncodeStats {
    int64_t clamped = 0;  // symbols outside their channel support, clamped to the bound
};

// Encodes integer latent values (y domain). channels[i] selects the table for
// symbols[i]. Out-of-support values are clamped to the nearest bound and
// counted in stats.
std::vector<uint8_t> range_encode(std::span<const int32_t> symbols, const CdfTableSet& tables,
                                  std::span<const int32_t> channels, EncodeStats* stats = nullptr);

// Decodes exactly `count` values; throws format_error on truncated input.
std::vector<int32_t> range_decode(std::span<const uint8_t> bytes, int64_t count,
                                  const CdfTableSet& tables, std::span<const int32_t> channels);

}  // namespace efc
