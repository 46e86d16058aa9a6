#pragma once

#include <stdexcept>
#include <string>

namespace biphoton {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A wavelength (or other argument) outside the interval a model is defined on.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Mathematically invalid arguments, e.g. a signal bluer than its pump.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid user configuration: presets, config files, option combinations.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file (time tags, CSV, calibration documents).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Least-squares problem without a unique solution.
class FitError : public Error {
public:
    using Error::Error;
};

} // namespace biphoton
