#pragma once

#include <stdexcept>
#include <string>

namespace ridas {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite entries, bad dimensions, out-of-range arguments.
class InvalidInputError : public Error {
public:
    explicit InvalidInputError(const std::string& msg) : Error(msg) {}
};

/// Rank outside [1, min(m, n)].
class InvalidRankError : public InvalidInputError {
public:
    explicit InvalidRankError(const std::string& msg) : InvalidInputError(msg) {}
};

/// Bad magic or unsupported version in a serialized stream.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

/// Truncated or corrupt payload; carries the byte offset where decoding failed.
class DecodeError : public Error {
public:
    DecodeError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}

    std::size_t byte_offset() const { return byte_offset_; }

private:
    std::size_t byte_offset_ = 0;
};

/// Planner backend failed: transport error or repeated malformed replies.
class PlannerFailureError : public Error {
public:
    explicit PlannerFailureError(const std::string& msg) : Error(msg) {}
};

/// Configuration file problems, reported before any event runs.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Filesystem I/O failures, with path context.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace ridas
