#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace platoon {

enum class ErrorKind {
    DuplicateWaypoint,
    TooFewWaypoints,
    OutOfRange,
    ProjectionAmbiguous,
    NonPositiveDt,
    SteeringSaturated,
    TubeViolation,
    HeadingDomainViolation,
    BarrierDomainError,
    PreconditionViolation,
    ParseError,
    ValidationError,
    IoError,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::DuplicateWaypoint: return "DuplicateWaypoint";
        case ErrorKind::TooFewWaypoints: return "TooFewWaypoints";
        case ErrorKind::OutOfRange: return "OutOfRange";
        case ErrorKind::ProjectionAmbiguous: return "ProjectionAmbiguous";
        case ErrorKind::NonPositiveDt: return "NonPositiveDt";
        case ErrorKind::SteeringSaturated: return "SteeringSaturated";
        case ErrorKind::TubeViolation: return "TubeViolation";
        case ErrorKind::HeadingDomainViolation: return "HeadingDomainViolation";
        case ErrorKind::BarrierDomainError: return "BarrierDomainError";
        case ErrorKind::PreconditionViolation: return "PreconditionViolation";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::ValidationError: return "ValidationError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the ErrorKind tags.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace platoon
