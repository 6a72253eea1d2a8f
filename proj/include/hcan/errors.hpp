#pragma once

#include <stdexcept>
#include <string>

namespace hcan {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

// Misuse of the computation graph (double backward, non-scalar root, ...).
class GraphError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// Invalid model / run / synthesis configuration. The CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or truncated on-disk data.
class FormatError : public Error {
public:
    using Error::Error;
};

class PathError : public Error {
public:
    using Error::Error;
};

}  // namespace hcan
