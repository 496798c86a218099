#ifndef UCAN_ERRORS_HPP
#define UCAN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ucan {

// Shape of an operand does not match what the operation requires.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// A configuration value is structurally invalid (groups not dividing
// channels, even kernel where an odd one is required, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A cross-module handshake was violated (shared attention components do
// not match the receiver's shapes).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// File or stream level failure.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// An iterative numeric procedure failed to converge or produced
// non-finite values.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace ucan

#endif
