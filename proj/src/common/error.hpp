#pragma once

#include <stdexcept>
#include <string>

namespace crg {

// Mirrors crg_status in include/crg/crg.h; values must stay in sync.
enum class ErrorCode {
    InvalidArgument = 1,
    Config = 2,
    Shape = 3,
    Io = 4,
    Version = 5,
    Digest = 6,
    Truncated = 7,
    Kind = 8,
    Degenerate = 9,
    Orientation = 10,
    Numeric = 11,
    NotFound = 12,
    Internal = 13,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) throw Error(code, message);
}

}  // namespace crg
