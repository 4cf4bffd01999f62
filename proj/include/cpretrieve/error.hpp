#pragma once

#include <stdexcept>
#include <string>

namespace cpretrieve {

enum class ErrorKind {
    Validation,
    Conflict,
    NotFound,
    Io,
    VersionedFormat,
    Configuration,
    Provider,          // transport failure, retriable
    ProviderContract,  // provider answered but broke its contract (wrong dimension, bad payload)
    Generation,
    LooViolation,
    DimensionMismatch,
};

const char* to_string(ErrorKind kind) noexcept;

/// Base error for everything the library throws on purpose.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Transport-level provider failure, raised after the retry budget is spent.
class ProviderError : public Error {
public:
    ProviderError(const std::string& message, int attempts)
        : Error(ErrorKind::Provider, message + " (after " + std::to_string(attempts) + " attempt" +
                                         (attempts == 1 ? "" : "s") + ")"),
          attempts_(attempts) {}

    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace cpretrieve
