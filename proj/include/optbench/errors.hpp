#pragma once

#include <stdexcept>
#include <string>

namespace optbench {

/// Base class for every error this library throws on a violated contract.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform; the message names both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A matrix expected to be symmetric positive definite failed a Cholesky
/// pivot. Carries the index of the failing pivot so callers (LM) can react.
class DefinitenessError : public Error {
public:
    DefinitenessError(std::string msg, int pivot_index)
        : Error(std::move(msg)), pivot(pivot_index) {}
    int pivot;
};

/// Non-finite value where a finite one is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// API misuse: stepping a finished environment, stale forward trace, etc.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Out-of-range index (class label, action id).
class IndexError : public Error {
public:
    using Error::Error;
};

/// Malformed input file (wrong magic, truncation, bad record size).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid experiment configuration. line is 0 when no line applies.
class ConfigError : public Error {
public:
    explicit ConfigError(std::string msg, int line_number = 0)
        : Error(std::move(msg)), line(line_number) {}
    int line;
};

/// emit_report could not use a run directory.
class ReportError : public Error {
public:
    using Error::Error;
};

} // namespace optbench
