// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace krisk {

/// Broad failure category. The CLI maps each category to an exit code.
enum class ErrorKind {
    config,   // invalid configuration, flags, or spec parameters (exit 2)
    data,     // unreadable/malformed files, incompatible model or dataset (exit 3)
    runtime,  // numeric failure, transport failure, non-convergence (exit 4)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Malformed on-disk file (bad magic, version, truncated payload, ...).
class FormatError : public DataError {
public:
    explicit FormatError(const std::string& what) : DataError(what) {}
};

class RuntimeError : public Error {
public:
    explicit RuntimeError(const std::string& what) : Error(ErrorKind::runtime, what) {}
};

/// Non-finite values produced by a model, loss, or trainer.
class NumericError : public RuntimeError {
public:
    explicit NumericError(const std::string& what) : RuntimeError(what) {}
};

/// An attack or trainer asked for input gradients from a model that has none.
class BlackBoxModelError : public DataError {
public:
    explicit BlackBoxModelError(const std::string& what) : DataError(what) {}
};

class TransportError : public RuntimeError {
public:
    explicit TransportError(const std::string& what) : RuntimeError(what) {}
};

class NonConvergenceError : public RuntimeError {
public:
    explicit NonConvergenceError(const std::string& what) : RuntimeError(what) {}
};

[[nodiscard]] constexpr int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::config: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::runtime: return 4;
    }
    return 4;
}

}  // namespace krisk
