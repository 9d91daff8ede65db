#pragma once

#include <stdexcept>
#include <string>

namespace nnforget {

// Base of every error raised by the library. The category names mirror the
// failure classes used throughout (configuration, shape, data, ...).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class SamplerError : public Error {
public:
    using Error::Error;
};

class FitError : public Error {
public:
    using Error::Error;
};

// Wraps any failure inside a pipeline phase, keeping the phase name.
class PhaseError : public Error {
public:
    PhaseError(std::string phase, const std::string& message);
    const std::string& phase() const { return phase_; }

private:
    std::string phase_;
};

}  // namespace nnforget
