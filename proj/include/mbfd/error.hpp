#pragma once

#include <stdexcept>
#include <string>

namespace mbfd {

// Root of every library exception. The CLI maps ConfigError to exit code 2 and
// MissingDataError to exit code 3; anything else exits with 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// A file or dataset source the caller asked for is not on disk.
class MissingDataError : public Error {
public:
    using Error::Error;
};

// A file exists but its content cannot be interpreted.
class FormatError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Undefined numerical result (zero variance, zero spectrum, non-finite loss, ...).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace mbfd
