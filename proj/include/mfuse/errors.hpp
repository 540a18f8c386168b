#pragma once

#include <stdexcept>
#include <string>

namespace mfuse {

// Base of every error thrown by the core. The C API maps each subclass to a
// distinct status code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller passed inconsistent or out-of-range arguments.
class InputError : public Error {
public:
    using Error::Error;
};

// A file or byte stream does not follow its declared format.
class FormatError : public Error {
public:
    using Error::Error;
};

// Well-formed input that this library deliberately does not handle.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

// Scene description violates a generator constraint.
class SpecError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Training or inference produced a non-finite value.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace mfuse
