#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tgp {

enum class ErrorCode {
    InvalidArgument,
    UnsupportedDerivativeOrder,
    FactorizationFailed,
    DuplicateLocations,
    DecompositionMismatch,
    PointOutsideBox,
    IllConditioned,
    Diverged,
    DegenerateGrid,
    RejectionBudgetExceeded,
    ZeroReferenceNorm,
    NoConvergence,
    ConfigError,
    IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Library-wide exception. Every failure path named by an operation contract
/// surfaces as an Error carrying its code, so callers can branch on code()
/// rather than on message text.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::UnsupportedDerivativeOrder: return "UnsupportedDerivativeOrder";
        case ErrorCode::FactorizationFailed: return "FactorizationFailed";
        case ErrorCode::DuplicateLocations: return "DuplicateLocations";
        case ErrorCode::DecompositionMismatch: return "DecompositionMismatch";
        case ErrorCode::PointOutsideBox: return "PointOutsideBox";
        case ErrorCode::IllConditioned: return "IllConditioned";
        case ErrorCode::Diverged: return "Diverged";
        case ErrorCode::DegenerateGrid: return "DegenerateGrid";
        case ErrorCode::RejectionBudgetExceeded: return "RejectionBudgetExceeded";
        case ErrorCode::ZeroReferenceNorm: return "ZeroReferenceNorm";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace tgp
