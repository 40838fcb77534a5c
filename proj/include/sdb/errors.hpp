#pragma once

#include <stdexcept>
#include <string>

namespace sdb {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller broke a precondition (dimension mismatch, bad argument shape).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// Decomposition failed to converge or produced unusable output.
class NumericalFailure : public Error {
public:
    using Error::Error;
};

/// A time or parameter lies outside the domain where a formula is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

class UnsupportedVariant : public Error {
public:
    using Error::Error;
};

class InvalidCovariance : public Error {
public:
    using Error::Error;
};

/// Requested dense materialization exceeds the supported size.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// An integrator or optimizer produced a non-finite state.
class DivergenceError : public Error {
public:
    using Error::Error;
};

class DegeneratePosterior : public Error {
public:
    using Error::Error;
};

/// Malformed configuration, tensor file or command line.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace sdb
