#pragma once

#include <stdexcept>
#include <string>

namespace distdiff {

// Exit-code categories: 1 usage/config, 2 data, 3 numerical.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
    static constexpr int exit_code = 1;
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
    static constexpr int exit_code = 2;
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
    static constexpr int exit_code = 3;
};

// Contract violations inside the library (wrong shapes, bad call order).
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace distdiff
