#pragma once

#include <stdexcept>
#include <string>

namespace neuron_steer {

// Base of every error raised by the library. The CLI maps the subclasses
// onto its exit codes (validation -> 2, I/O -> 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed DPNA containers. Each corruption class has its own code so that
// callers (and tests) can tell them apart without parsing the message.
enum class DumpErrorCode {
    BadMagic,
    UnsupportedVersion,
    OffsetOutOfBounds,
    NonFinite,
    BadMetadata,
    InvariantViolation,
};

const char *to_string(DumpErrorCode code);

class DumpError : public ValidationError {
public:
    DumpError(DumpErrorCode code, const std::string &what)
        : ValidationError(std::string(to_string(code)) + ": " + what), code_(code) {}

    DumpErrorCode code() const noexcept { return code_; }

private:
    DumpErrorCode code_;
};

} // namespace neuron_steer
