#pragma once

#include <stdexcept>
#include <string>

namespace zone {

/// Base error for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when operand dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Raised for malformed or unsupported files.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace zone
