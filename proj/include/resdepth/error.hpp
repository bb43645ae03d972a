#pragma once

#include <stdexcept>
#include <string>

namespace resdepth {

// Base class for all toolkit failures. Subclasses encode the failure
// family; the what() string carries the specifics.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed text input (grid headers, CSV rows, JSON configs).
class ParseError : public Error {
public:
    using Error::Error;
};

// Structurally inconsistent data (value counts, shape mismatches in files).
class StructuralError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Out-of-range window / index requests.
class BoundsError : public Error {
public:
    using Error::Error;
};

// Invalid configuration or incompatible options.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Degenerate or unusable numeric input (empty classes, zero variance, ...).
class InputError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finite ones are required (e.g. diverged training).
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace resdepth
