#include "common/error.hpp"

namespace crg {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid argument";
        case ErrorCode::Config: return "configuration error";
        case ErrorCode::Shape: return "shape error";
        case ErrorCode::Io: return "I/O error";
        case ErrorCode::Version: return "version error";
        case ErrorCode::Digest: return "digest mismatch";
        case ErrorCode::Truncated: return "truncated file";
        case ErrorCode::Kind: return "kind mismatch";
        case ErrorCode::Degenerate: return "degenerate input";
        case ErrorCode::Orientation: return "orientation error";
        case ErrorCode::Numeric: return "numeric error";
        case ErrorCode::NotFound: return "not found";
        case ErrorCode::Internal: return "internal error";
    }
    return "unknown error";
}

}  // namespace crg
