#pragma once

#include <stdexcept>
#include <string>

namespace efc {

// Error taxonomy. The CLI maps these onto exit codes:
//   config_error / protocol misuse        -> 2 (runtime)
//   data_error / format_error             -> 3 (data/format)
// Usage errors (bad flags) are handled by the CLI parser itself (exit 1).

struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error("numeric: " + msg) {}
};

struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error("data: " + msg) {}
};

struct format_error : std::runtime_error {
    explicit format_error(const std::string& msg) : std::runtime_error("format: " + msg) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error("io: " + msg) {}
};

struct protocol_error : std::runtime_error {
    explicit protocol_error(const std::string& msg) : std::runtime_error("protocol: " + msg) {}
};

}  // namespace efc
