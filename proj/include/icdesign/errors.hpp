#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace icdesign {

enum class ErrorCode {
    FamilyMismatch,
    InvalidDimensions,
    UnsupportedAgentCount,
    MissingParameter,
    NoClosedForm,
    NoIdentifyingStatistic,
    SingularTransform,
    InvalidPair,
    AssumptionViolated,
    NotInvertible,
    InvalidVariance,
    NotCertified,
    SingularC,
    InvalidParameter,
    BudgetExceeded,
    ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::FamilyMismatch: return "FamilyMismatch";
        case ErrorCode::InvalidDimensions: return "InvalidDimensions";
        case ErrorCode::UnsupportedAgentCount: return "UnsupportedAgentCount";
        case ErrorCode::MissingParameter: return "MissingParameter";
        case ErrorCode::NoClosedForm: return "NoClosedForm";
        case ErrorCode::NoIdentifyingStatistic: return "NoIdentifyingStatistic";
        case ErrorCode::SingularTransform: return "SingularTransform";
        case ErrorCode::InvalidPair: return "InvalidPair";
        case ErrorCode::AssumptionViolated: return "AssumptionViolated";
        case ErrorCode::NotInvertible: return "NotInvertible";
        case ErrorCode::InvalidVariance: return "InvalidVariance";
        case ErrorCode::NotCertified: return "NotCertified";
        case ErrorCode::SingularC: return "SingularC";
        case ErrorCode::InvalidParameter: return "InvalidParameter";
        case ErrorCode::BudgetExceeded: return "BudgetExceeded";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace icdesign
