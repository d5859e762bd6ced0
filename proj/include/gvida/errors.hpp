#pragma once

#include <stdexcept>
#include <string>

namespace gvida {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad argument values or shapes at an API boundary.
struct ParameterError : Error {
    using Error::Error;
};

// Malformed files (datasets, checkpoints, metric logs).
struct FormatError : Error {
    using Error::Error;
};

// Inconsistent configuration: unknown keys, missing sections, impossible wiring.
struct ConfigError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

// A class had no samples when per-class statistics were required.
struct PriorEstimationError : Error {
    using Error::Error;
};

}  // namespace gvida
