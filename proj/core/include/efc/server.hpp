#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "efc/model.hpp"
#include "efc/wire.hpp"

namespace efc {

// Cloud side of the split pipeline. Accepts connections, verifies the model
// digest in the HELLO handshake, then answers FEATURES frames with
// PREDICTION frames. Weights are shared read-only across connections; each
// connection owns its decode buffers.
class Server {
public:
    explicit Server(std::shared_ptr<const ModelBundle> bundle);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and starts the accept loop. port 0 picks an ephemeral port.
    void start(const std::string& host, uint16_t port);
    uint16_t port() const { return port_; }
    void stop();
    bool running() const { return running_.load(); }

    int64_t predictions_served() const { return predictions_.load(); }

private:
    void accept_loop();
    void handle_connection(int fd);
    void track(int fd, bool add);

    std::shared_ptr<const ModelBundle> bundle_;
    int listen_fd_ = -1;
    uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::atomic<int64_t> predictions_{0};
    std::thread accept_thread_;
    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::set<int> client_fds_;
};

// CLI entry point: serves until SIGINT/SIGTERM.
int serve_forever(const std::string& addr, const std::string& ckpt_path);

}  // namespace efc
