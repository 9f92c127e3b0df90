#pragma once

#include <stdexcept>
#include <string>

namespace petnet {

// Base for everything thrown by the library. The CLI maps subclasses to
// process exit codes (config -> 2, format -> 3, numeric -> 4).
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension/extent mismatches: bad operand shapes, odd pooling dims, etc.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

// Invalid user-supplied configuration or precondition violations.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// Malformed files: PGM headers, model files, manifests.
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("format error: " + msg) {}
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

// API misuse that is a programming error, e.g. consuming a layer cache twice.
struct UsageError : Error {
    explicit UsageError(const std::string& msg) : Error("usage error: " + msg) {}
};

}  // namespace petnet
