#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace levyspec {

enum class ErrorCode {
    InvalidArgument,
    DomainError,
    NonConvergence,
    GridTooNarrow,
    NotContinuable,
    MartingaleViolation,
    CoverageError,
    BracketingViolation,
    SingularSystem,
    BranchAmbiguity,
    EpsTooLarge,
    SearchExhausted,
    VanishingDenominator,
    GridRange,
    InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code so the
/// harness can emit it into errors.json.
class LevyError : public std::runtime_error {
public:
    LevyError(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw LevyError(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) fail(code, what);
}

} // namespace levyspec
