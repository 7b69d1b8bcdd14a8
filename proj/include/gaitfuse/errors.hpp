#pragma once

#include <stdexcept>
#include <string>

namespace gaitfuse {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad argument values or shapes (non-finite entries, dimension mismatch, ...).
class InputError : public Error {
public:
    using Error::Error;
};

class DimensionError : public InputError {
public:
    using InputError::InputError;
};

// Malformed input files or unusable on-disk data.
class DataError : public Error {
public:
    using Error::Error;
};

// Bad experiment configuration (missing keys, unparsable values, absent paths).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Numerical failure at runtime (singular matrices, diverging optimization).
class NumericError : public Error {
public:
    using Error::Error;
};

class SingularityError : public NumericError {
public:
    using NumericError::NumericError;
};

class DivergenceError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace gaitfuse
