#include <doctest.h>

#include <cstring>
#include <memory>

#include "efc/wire.hpp"

using namespace efc;

namespace {

FrameReader reader_over(const std::vector<uint8_t>& bytes, size_t chunk = 3) {
    auto pos = std::make_shared<size_t>(0);
    auto data = std::make_shared<std::vector<uint8_t>>(bytes);
    return FrameReader([pos, data, chunk](uint8_t* buf, size_t cap) -> int64_t {
        if (*pos >= data->size()) return 0;
        const size_t n = std::min({cap, chunk, data->size() - *pos});
        std::memcpy(buf, data->data() + *pos, n);
        *pos += n;
        return int64_t(n);
    });
}

}  // namespace

TEST_CASE("frame encoding matches the declared byte layout") {
    const std::vector<uint8_t> payload{'h', 'e', 'l', 'l', 'o'};
    const auto bytes = frame_encode(frame_type::features, payload);
    const std::vector<uint8_t> expect{0x02, 0x00, 0x00, 0x00, 0x05, 'h', 'e', 'l', 'l', 'o'};
    CHECK(bytes == expect);
}

TEST_CASE("frame round-trip through a dribbling reader") {
    const std::vector<uint8_t> payload{1, 2, 3, 4, 5, 6, 7};
    auto bytes = frame_encode(frame_type::hello, payload);
    const auto more = frame_encode(frame_type::prediction, std::vector<uint8_t>{});
    bytes.insert(bytes.end(), more.begin(), more.end());

    FrameReader r = reader_over(bytes, 2);  // partial reads buffered
    const Frame f1 = r.next();
    CHECK(f1.type == frame_type::hello);
    CHECK(f1.payload == payload);
    const Frame f2 = r.next();
    CHECK(f2.type == frame_type::prediction);
    CHECK(f2.payload.empty());
    CHECK_THROWS_AS(r.next(), protocol_error);  // EOF
}

TEST_CASE("declared length longer than the stream is a truncation error") {
    std::vector<uint8_t> bytes{0x02, 0x00, 0x00, 0x00, 0x0A, 1, 2, 3, 4, 5};
    FrameReader r = reader_over(bytes);
    CHECK_THROWS_AS(r.next(), protocol_error);
}

TEST_CASE("unknown frame types are rejected") {
    std::vector<uint8_t> bytes{0x55, 0x00, 0x00, 0x00, 0x00};
    FrameReader r = reader_over(bytes);
    CHECK_THROWS_AS(r.next(), protocol_error);
    CHECK_THROWS_AS(frame_encode(0x55, std::vector<uint8_t>{}), protocol_error);
}

TEST_CASE("prediction payload: 38 bytes, little-endian fields") {
    Prediction p;
    for (size_t i = 0; i < 5; ++i) {
        p.topk[i].cls = uint16_t(7 - i);
        p.topk[i].score = 0.5f / float(i + 1);
    }
    p.server_us = 0x0102030405060708ull;
    const auto bytes = prediction_encode(p);
    REQUIRE(bytes.size() == 38);
    CHECK(bytes[0] == 7);  // class 7 LE
    CHECK(bytes[1] == 0);
    const Prediction q = prediction_decode(bytes);
    CHECK(q.server_us == p.server_us);
    for (size_t i = 0; i < 5; ++i) {
        CHECK(q.topk[i].cls == p.topk[i].cls);
        CHECK(q.topk[i].score == p.topk[i].score);
    }
    CHECK(q.top1() == 7);
    CHECK_THROWS_AS(prediction_decode(std::vector<uint8_t>(37)), protocol_error);
}

TEST_CASE("error frames carry a code and message") {
    const auto bytes = error_encode(1, "digest mismatch");
    const ErrorFrame e = error_decode(bytes);
    CHECK(e.code == 1);
    CHECK(e.message == "digest mismatch");
    CHECK_THROWS_AS(error_decode(std::vector<uint8_t>{}), protocol_error);
}

TEST_CASE("address parsing") {
    const auto [h, p] = split_address("127.0.0.1:9000");
    CHECK(h == "127.0.0.1");
    CHECK(p == 9000);
    CHECK_THROWS_AS(split_address("nocolon"), config_error);
    CHECK_THROWS_AS(split_address(":123"), config_error);
    CHECK_THROWS_AS(split_address("host:"), config_error);
    CHECK_THROWS_AS(split_address("host:99999"), config_error);
}
