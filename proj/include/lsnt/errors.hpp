#pragma once

#include <stdexcept>
#include <string>

namespace lsnt {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Matrix dimension mismatch; message carries both shapes.
struct ShapeError : Error {
    using Error::Error;
};

/// Invalid model or run configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Out-of-range argument to a numeric routine.
struct ParameterError : Error {
    using Error::Error;
};

/// Empty or otherwise unusable dataset.
struct DataError : Error {
    using Error::Error;
};

/// Required column missing from an input file.
struct SchemaError : Error {
    using Error::Error;
};

/// A single malformed input row; carries its 1-based line number.
struct RowError : Error {
    RowError(std::size_t line_no, const std::string& what)
        : Error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
    std::size_t line;
};

/// Metric undefined for the given inputs (e.g. single-class AUC).
struct MetricError : Error {
    using Error::Error;
};

/// Malformed or incompatible model file.
struct FormatError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

/// Non-monotone timestamp within one account's stream.
struct OrderingError : Error {
    using Error::Error;
};

/// Finite-difference probe hit a non-finite function value.
struct OracleError : Error {
    using Error::Error;
};

struct InternalError : Error {
    using Error::Error;
};

}  // namespace lsnt
