#pragma once

#include <stdexcept>
#include <string>

namespace povmkit {

/// Invalid physical or configuration parameter (out of documented range).
struct ParameterError : std::invalid_argument {
    explicit ParameterError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Requested Hilbert-space dimension is not usable.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Matrix or vector operands have inconsistent shapes.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Largest outcome is not saturated at the truncation edge; extension refused.
struct SaturationError : std::runtime_error {
    explicit SaturationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Hilbert-space truncation too small for the requested probe amplitudes.
struct TruncationError : std::runtime_error {
    explicit TruncationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Outcome has zero total weight; conditional quantities are undefined.
struct ZeroOutcomeError : std::runtime_error {
    explicit ZeroOutcomeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Scalar argument outside its documented range.
struct RangeError : std::out_of_range {
    explicit RangeError(const std::string& msg) : std::out_of_range(msg) {}
};

/// Figure-of-merit fit residual exceeds the model-mismatch threshold.
struct FitDivergence : std::runtime_error {
    explicit FitDivergence(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace povmkit
