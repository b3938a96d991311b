#pragma once

#include <stdexcept>
#include <string>

namespace lipgan {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed shapes, widths, or other construction-time problems.
struct ConfigError : Error {
    using Error::Error;
};

// API misuse: empty batch, non-scalar backward target, foreign tape handle.
struct UsageError : Error {
    using Error::Error;
};

// Math domain violations, e.g. log of a non-positive value.
struct DomainError : Error {
    using Error::Error;
};

// Corrupt or unexpected on-disk data.
struct FormatError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace lipgan
