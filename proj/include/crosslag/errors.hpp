#pragma once

#include <stdexcept>
#include <string>

namespace crosslag {

// Base of every error raised by the library. Subclasses map onto the CLI
// exit-code contract (usage/validation vs data/model incompatibility).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shapes that do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

// NaN/Inf in a place that must hold a finite number.
class NumericError : public Error {
public:
    using Error::Error;
};

// Invalid hyperparameter, split ratio, window length, etc.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed input file.
class LoadError : public Error {
public:
    using Error::Error;
};

// Checkpoint or config that does not fit the data it is applied to.
class CompatibilityError : public Error {
public:
    using Error::Error;
};

}  // namespace crosslag
