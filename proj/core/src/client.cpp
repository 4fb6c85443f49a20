#include "efc/client.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

#include "efc/codec.hpp"

namespace efc {
namespace {

void send_all(int fd, const std::vector<uint8_t>& bytes) {
    size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) throw protocol_error("send failed");
        sent += static_cast<size_t>(n);
    }
}

}  // namespace

Client::Client(const std::string& host, uint16_t port, const ModelBundle& bundle)
    : bundle_(bundle) {
    if (!bundle.has_tables()) throw config_error("client bundle has no frozen tables");
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw io_error("socket() failed");
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        if (host == "localhost") {
            addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        } else {
            ::close(fd_);
            fd_ = -1;
            throw config_error("cannot parse host address '" + host + "'");
        }
    }
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw io_error("connection to " + host + ":" + std::to_string(port) + " refused");
    }
    const int cfd = fd_;
    reader_ = std::make_unique<FrameReader>(
        [cfd](uint8_t* buf, size_t cap) -> int64_t { return ::recv(cfd, buf, cap, 0); });

    send_all(fd_, frame_encode(frame_type::hello,
                               std::span<const uint8_t>(bundle_.digest.data(), 16)));
    const Frame reply = reader_->next();
    if (reply.type == frame_type::error) {
        const ErrorFrame e = error_decode(reply.payload);
        close();
        throw protocol_error("server rejected handshake (code " + std::to_string(e.code) +
                             "): " + e.message);
    }
    if (reply.type != frame_type::hello || reply.payload.size() != 16) {
        close();
        throw protocol_error("unexpected handshake reply");
    }
}

Client::~Client() { close(); }

void Client::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

std::pair<Prediction, ClassifyTimings> Client::classify(const Tensor& image) {
    if (fd_ < 0) throw protocol_error("client is closed");
    ClassifyTimings t;

    const auto e0 = std::chrono::steady_clock::now();
    const CompressResult comp = compress(bundle_, image);
    const auto e1 = std::chrono::steady_clock::now();
    t.encode_us = std::chrono::duration_cast<std::chrono::microseconds>(e1 - e0).count();

    const auto request = frame_encode(frame_type::features, comp.cf.serialize());
    // request frame + response frame header overhead, plus the feature bytes
    t.transfer_bytes = static_cast<int64_t>(2 * kFrameHeaderSize + comp.cf.byte_size());

    const auto r0 = std::chrono::steady_clock::now();
    send_all(fd_, request);
    const Frame reply = reader_->next();
    const auto r1 = std::chrono::steady_clock::now();
    t.rtt_us = std::chrono::duration_cast<std::chrono::microseconds>(r1 - r0).count();

    if (reply.type == frame_type::error) {
        const ErrorFrame e = error_decode(reply.payload);
        throw protocol_error("server error (code " + std::to_string(e.code) + "): " + e.message);
    }
    if (reply.type != frame_type::prediction) throw protocol_error("unexpected reply frame");
    return {prediction_decode(reply.payload), t};
}

std::pair<Prediction, ClassifyTimings> client_classify(const std::string& addr,
                                                       const Tensor& image,
                                                       const ModelBundle& bundle) {
    const auto [host, port] = split_address(addr);
    Client client(host, port, bundle);
    return client.classify(image);
}

}  // namespace efc
