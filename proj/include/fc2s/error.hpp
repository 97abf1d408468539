#pragma once

#include <stdexcept>
#include <string>

namespace fc2s {

enum class ErrorKind {
    config,
    shape,
    numeric,
    divergence,
    infeasible,
    degenerate,
    io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

// Process exit code for the command-line tool.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::numeric:
    case ErrorKind::divergence: return 3;
    case ErrorKind::infeasible: return 4;
    default: return 1;
    }
}

}  // namespace fc2s
