#include "efc/server.hpp"

#include <arpa/inet.h>
#include <csignal>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <iostream>

#include "efc/checkpoint.hpp"
#include "efc/codec.hpp"
#include "efc/md5.hpp"
#include "efc/ops.hpp"

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

Prediction predict(const ModelBundle& bundle, const CompressedFeature& cf) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor latent = decompress(bundle, cf);
    const Tensor feature = decoder_forward(bundle, latent, nullptr);
    const Tensor logits = classifier_forward(bundle, feature, nullptr);
    const Tensor probs = softmax(logits);
    const auto t1 = std::chrono::steady_clock::now();

    const int64_t k = probs.numel();
    std::vector<int> order(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) order[static_cast<size_t>(i)] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const float pa = probs.data()[a], pb = probs.data()[b];
        return pa != pb ? pa > pb : a < b;
    });

    Prediction p;
    for (size_t i = 0; i < p.topk.size(); ++i) {
        if (i < order.size()) {
            p.topk[i].cls = static_cast<uint16_t>(order[i]);
            p.topk[i].score = probs.data()[order[i]];
        }
    }
    p.server_us = static_cast<uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count());
    return p;
}

}  // namespace

Server::Server(std::shared_ptr<const ModelBundle> bundle) : bundle_(std::move(bundle)) {
    if (!bundle_) throw config_error("server needs a model bundle");
    if (!bundle_->has_tables()) throw config_error("server bundle has no frozen tables");
}

Server::~Server() { stop(); }

void Server::start(const std::string& host, uint16_t port) {
    if (running_.load()) throw config_error("server already running");
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw io_error("socket() failed");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        if (host == "localhost") {
            addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        } else {
            ::close(listen_fd_);
            throw config_error("cannot parse host address '" + host + "'");
        }
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(listen_fd_);
        throw io_error("bind to " + host + ":" + std::to_string(port) + " failed");
    }
    if (::listen(listen_fd_, 16) != 0) {
        ::close(listen_fd_);
        throw io_error("listen failed");
    }
    sockaddr_in bound{};
    socklen_t blen = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &blen);
    port_ = ntohs(bound.sin_port);

    running_.store(true);
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
    if (!running_.exchange(false)) return;
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    {
        std::lock_guard<std::mutex> lock(mu_);
        for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    for (auto& w : workers_) {
        if (w.joinable()) w.join();
    }
    workers_.clear();
}

void Server::track(int fd, bool add) {
    std::lock_guard<std::mutex> lock(mu_);
    if (add)
        client_fds_.insert(fd);
    else
        client_fds_.erase(fd);
}

void Server::accept_loop() {
    while (running_.load()) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (!running_.load()) break;
            continue;
        }
        track(fd, true);
        workers_.emplace_back([this, fd] {
            try {
                handle_connection(fd);
            } catch (...) {
                // connection-level failures only affect that client
            }
            track(fd, false);
            ::close(fd);
        });
    }
}

void Server::handle_connection(int fd) {
    FrameReader reader([fd](uint8_t* buf, size_t cap) -> int64_t {
        return ::recv(fd, buf, cap, 0);
    });

    // handshake: client digest must match ours
    Frame hello = reader.next();
    if (hello.type != frame_type::hello || hello.payload.size() != 16) {
        send_all(fd, frame_encode(frame_type::error, error_encode(3, "expected HELLO")));
        return;
    }
    if (!std::equal(hello.payload.begin(), hello.payload.end(), bundle_->digest.begin())) {
        send_all(fd, frame_encode(frame_type::error, error_encode(1, "digest mismatch")));
        return;
    }
    send_all(fd, frame_encode(frame_type::hello,
                              std::span<const uint8_t>(bundle_->digest.data(), 16)));

    while (running_.load()) {
        Frame f;
        try {
            f = reader.next();
        } catch (const protocol_error&) {
            return;  // peer closed
        }
        if (f.type != frame_type::features) {
            send_all(fd, frame_encode(frame_type::error, error_encode(3, "expected FEATURES")));
            continue;
        }
        try {
            const CompressedFeature cf = CompressedFeature::parse(f.payload);
            const Prediction p = predict(*bundle_, cf);
            send_all(fd, frame_encode(frame_type::prediction, prediction_encode(p)));
            predictions_.fetch_add(1);
        } catch (const config_error& e) {
            // digest mismatch inside the bitstream header
            send_all(fd, frame_encode(frame_type::error, error_encode(1, e.what())));
        } catch (const format_error& e) {
            send_all(fd, frame_encode(frame_type::error, error_encode(2, e.what())));
        }
    }
}

namespace {
std::atomic<bool> g_stop{false};
void stop_handler(int) { g_stop.store(true); }
}  // namespace

int serve_forever(const std::string& addr, const std::string& ckpt_path) {
    const auto [host, port] = split_address(addr);
    auto bundle = std::make_shared<ModelBundle>(load_bundle(ckpt_path));
    Server server{std::shared_ptr<const ModelBundle>(bundle)};
    server.start(host, port);
    std::signal(SIGINT, stop_handler);
    std::signal(SIGTERM, stop_handler);
    std::cout << "serving " << hex_digest(bundle->digest) << " on " << host << ":"
              << server.port() << std::endl;
    while (!g_stop.load() && server.running()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    server.stop();
    return 0;
}

}  // namespace efc
