#pragma once

#include <string>

#include "efc/model.hpp"
#include "efc/wire.hpp"

namespace efc {

struct ClassifyTimings {
    int64_t encode_us = 0;      // encoder forward + quantize + range coding
    int64_t transfer_bytes = 0; // request/response framing overhead + feature payload
    int64_t rtt_us = 0;         // request sent -> prediction received
};

// Edge side: connects, runs the digest handshake, then sends one FEATURES
// frame per classify() call. An ERROR reply raises protocol_error carrying
// the server's code and message.
class Client {
public:
    Client(const std::string& host, uint16_t port, const ModelBundle& bundle);
    ~Client();
    Client(const Client&) = delete;
    Client& operator=(const Client&) = delete;

    std::pair<Prediction, ClassifyTimings> classify(const Tensor& image);
    void close();

private:
    const ModelBundle& bundle_;
    int fd_ = -1;
    std::unique_ptr<FrameReader> reader_;
};

// One-shot convenience wrapper.
std::pair<Prediction, ClassifyTimings> client_classify(const std::string& addr,
                                                       const Tensor& image,
                                                       const ModelBundle& bundle);

}  // namespace efc
