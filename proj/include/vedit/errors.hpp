#pragma once

#include <stdexcept>
#include <string>

namespace vedit {

enum class ErrorKind {
    invalid_argument,
    shape_mismatch,
    index_out_of_range,
    io,
    format,
    numerical,
    duplicate_key,
    cache_miss,
    incompatible_cache,
};

/// Base exception for every failure the library reports. The kind decides
/// the CLI exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Process exit codes used by the command line tool.
inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_argument:
        case ErrorKind::shape_mismatch:
        case ErrorKind::index_out_of_range:
            return 2;
        case ErrorKind::io:
        case ErrorKind::format:
            return 3;
        case ErrorKind::numerical:
            return 4;
        case ErrorKind::duplicate_key:
        case ErrorKind::cache_miss:
        case ErrorKind::incompatible_cache:
            return 5;
    }
    return 1;
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace vedit
