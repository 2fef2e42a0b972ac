// Error reporting for the epigraph library. Every failure carries a stable
// machine-parsable category so the CLI can map it to a single-line report.

#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace epigraph {

enum class ErrorCode {
    invalid_camera,
    degenerate_pair,
    degenerate_geometry,
    at_infinity,
    numerical_failure,
    unknown_view,
    empty_cloud,
    insufficient_anchors,
    degenerate_edge,
    nonfinite_input,
    contract_violation,
    invalid_config,
    parse_error,
    io_error,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_camera:       return "invalid-camera";
        case ErrorCode::degenerate_pair:      return "degenerate-pair";
        case ErrorCode::degenerate_geometry:  return "degenerate-geometry";
        case ErrorCode::at_infinity:          return "at-infinity";
        case ErrorCode::numerical_failure:    return "numerical-failure";
        case ErrorCode::unknown_view:         return "unknown-view";
        case ErrorCode::empty_cloud:          return "empty-cloud";
        case ErrorCode::insufficient_anchors: return "insufficient-anchors";
        case ErrorCode::degenerate_edge:      return "degenerate-edge";
        case ErrorCode::nonfinite_input:      return "nonfinite-input";
        case ErrorCode::contract_violation:   return "contract-violation";
        case ErrorCode::invalid_config:       return "invalid-config";
        case ErrorCode::parse_error:          return "parse-error";
        case ErrorCode::io_error:             return "io-error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    const char* category() const noexcept { return to_string(code_); }

private:
    ErrorCode code_;
};

// Thrown when an iterative solve hits a non-finite objective; keeps the last
// finite iterate so callers can salvage a usable estimate.
class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string& message, const Eigen::Vector3d& last_finite)
        : Error(ErrorCode::numerical_failure, message), last_finite_iterate_(last_finite) {}

    const Eigen::Vector3d& last_finite_iterate() const noexcept { return last_finite_iterate_; }

private:
    Eigen::Vector3d last_finite_iterate_;
};

}  // namespace epigraph
