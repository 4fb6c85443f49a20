#include "efc/range_coder.hpp"

#include <algorithm>

namespace efc {

namespace {
constexpr uint32_t kTopValue = 1u << 24;
constexpr uint32_t kTotal = CdfTableSet::kTotal;
}  // namespace

void RangeEncoder::shift_low() {
    if (static_cast<uint32_t>(low_ >> 32) != 0 || static_cast<uint32_t>(low_) < 0xFF000000u) {
        uint8_t temp = cache_;
        const uint8_t carry = static_cast<uint8_t>(low_ >> 32);
        do {
            out_.push_back(static_cast<uint8_t>(temp + carry));
            temp = 0xFF;
        } while (--cache_size_ != 0);
        cache_ = static_cast<uint8_t>(low_ >> 24);
    }
    ++cache_size_;
    low_ = (static_cast<uint32_t>(low_) << 8) & 0xFFFFFFFFu;
}

void RangeEncoder::encode(uint32_t cum_lo, uint32_t cum_hi) {
    if (cum_hi <= cum_lo || cum_hi > kTotal) throw config_error("range encoder: bad interval");
    range_ /= kTotal;
    low_ += static_cast<uint64_t>(cum_lo) * range_;
    range_ *= cum_hi - cum_lo;
    while (range_ < kTopValue) {
        range_ <<= 8;
        shift_low();
    }
}

std::vector<uint8_t> RangeEncoder::finish() {
    if (!finished_) {
        for (int i = 0; i < 5; ++i) shift_low();
        finished_ = true;
    }
    return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : in_(bytes) {
    next_byte();  // cache pad written by the encoder
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
    if (pos_ >= in_.size()) throw format_error("range decoder: truncated stream");
    return in_[pos_++];
}

uint32_t RangeDecoder::decode_freq() {
    range_ /= kTotal;
    const uint32_t f = code_ / range_;
    if (f >= kTotal) throw format_error("range decoder: corrupt stream");
    return f;
}

void RangeDecoder::decode_update(uint32_t cum_lo, uint32_t cum_hi) {
    code_ -= cum_lo * range_;
    range_ *= cum_hi - cum_lo;
    while (range_ < kTopValue) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
}

std::vector<uint8_t> range_encode(std::span<const int32_t> symbols, const CdfTableSet& tables,
                                  std::span<const int32_t> channels, EncodeStats* stats) {
    if (symbols.size() != channels.size())
        throw config_error("range_encode: symbols and channels length mismatch");
    RangeEncoder enc;
    int64_t clamped = 0;
    for (size_t i = 0; i < symbols.size(); ++i) {
        const int32_t ch = channels[i];
        if (ch < 0 || static_cast<size_t>(ch) >= tables.tables.size())
            throw config_error("range_encode: channel index out of range");
        const CdfTable& t = tables.tables[static_cast<size_t>(ch)];
        int32_t v = symbols[i];
        if (v < t.y_min) {
            v = t.y_min;
            ++clamped;
        } else if (v > t.y_max) {
            v = t.y_max;
            ++clamped;
        }
        const size_t s = static_cast<size_t>(v - t.y_min);
        enc.encode(t.cum[s], t.cum[s + 1]);
    }
    if (stats) stats->clamped = clamped;
    return enc.finish();
}

std::vector<int32_t> range_decode(std::span<const uint8_t> bytes, int64_t count,
                                  const CdfTableSet& tables, std::span<const int32_t> channels) {
    if (static_cast<int64_t>(channels.size()) != count)
        throw config_error("range_decode: channels length must equal count");
    RangeDecoder dec(bytes);
    std::vector<int32_t> out(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        const int32_t ch = channels[static_cast<size_t>(i)];
        if (ch < 0 || static_cast<size_t>(ch) >= tables.tables.size())
            throw config_error("range_decode: channel index out of range");
        const CdfTable& t = tables.tables[static_cast<size_t>(ch)];
        const uint32_t f = dec.decode_freq();
        // find s with cum[s] <= f < cum[s+1]
        const auto it = std::upper_bound(t.cum.begin(), t.cum.end(), f);
        const size_t s = static_cast<size_t>(it - t.cum.begin()) - 1;
        dec.decode_update(t.cum[s], t.cum[s + 1]);
        out[static_cast<size_t>(i)] = t.y_min + static_cast<int32_t>(s);
    }
    return out;
}

}  // namespace efc
