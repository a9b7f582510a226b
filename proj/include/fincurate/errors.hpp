#pragma once

#include <stdexcept>
#include <string>

namespace fincurate {

// Error categories map 1:1 onto CLI exit codes: config=1, data=2, client=3.
struct config_error : std::runtime_error {
    explicit config_error(const std::string & msg) : std::runtime_error(msg) {}
};

struct data_error : std::runtime_error {
    explicit data_error(const std::string & msg) : std::runtime_error(msg) {}
};

struct client_error : std::runtime_error {
    explicit client_error(const std::string & msg) : std::runtime_error(msg) {}
};

} // namespace fincurate
