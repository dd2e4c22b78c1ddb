#pragma once

#include <stdexcept>
#include <string>

namespace windkit {

/// Base class for all engine errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration: bad schema, unknown keys, out-of-range settings.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

/// Corrupt or inconsistent data: blob/sidecar mismatches, shape conflicts.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what) {}
};

/// Numerical failure: non-finite state, domain violations, failed factorizations.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(what) {}
};

}  // namespace windkit
