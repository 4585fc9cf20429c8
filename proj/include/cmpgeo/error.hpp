#pragma once

#include <stdexcept>
#include <limits>
#include <string>

namespace cmpgeo {

enum class ErrorKind {
    WarpVanishes,
    PoleTooClose,
    MultipleCriticalRadii,
    PoleCrossing,
    DomainExit,
    ShootingFailed,
    IntegrandSingular,
    HypothesisViolated,
    DegenerateTensor,
    LeftDomain,
    AngleUnstable,
    FlagDegenerate,
    NotAdmissible,
    HingeViolated,
    ConfigInvalid,
};

const char* to_string(ErrorKind k);

// Single exception type for every numerical failure in the library. `value`
// carries the location or residual that the failure is about (t*, s_exit,
// residual, panel index ...), NaN when there is none.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what, double value = std::numeric_limits<double>::quiet_NaN())
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), value_(value) {}

    ErrorKind kind() const { return kind_; }
    double value() const { return value_; }

private:
    ErrorKind kind_;
    double value_;
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::WarpVanishes: return "WarpVanishes";
    case ErrorKind::PoleTooClose: return "PoleTooClose";
    case ErrorKind::MultipleCriticalRadii: return "MultipleCriticalRadii";
    case ErrorKind::PoleCrossing: return "PoleCrossing";
    case ErrorKind::DomainExit: return "DomainExit";
    case ErrorKind::ShootingFailed: return "ShootingFailed";
    case ErrorKind::IntegrandSingular: return "IntegrandSingular";
    case ErrorKind::HypothesisViolated: return "HypothesisViolated";
    case ErrorKind::DegenerateTensor: return "DegenerateTensor";
    case ErrorKind::LeftDomain: return "LeftDomain";
    case ErrorKind::AngleUnstable: return "AngleUnstable";
    case ErrorKind::FlagDegenerate: return "FlagDegenerate";
    case ErrorKind::NotAdmissible: return "NotAdmissible";
    case ErrorKind::HingeViolated: return "HingeViolated";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    }
    return "Unknown";
}

} // namespace cmpgeo
