#pragma once

#include <stdexcept>
#include <string>

namespace ratefit {

enum class FitErrorCode {
    Separation,          // estimate at +/- infinity (all cross products on one side)
    Divergent,           // Newton failed to reach tolerance
    SingularHessian,     // bread matrix not invertible
    RankDeficient,       // covariate design rank < p
    PreconditionViolated,
    NotApplicable,
    EmptyGroup,
    ZeroVariance,
    InvalidProbability,
};

inline const char* to_string(FitErrorCode c) {
    switch (c) {
        case FitErrorCode::Separation: return "Separation";
        case FitErrorCode::Divergent: return "Divergent";
        case FitErrorCode::SingularHessian: return "SingularHessian";
        case FitErrorCode::RankDeficient: return "RankDeficient";
        case FitErrorCode::PreconditionViolated: return "PreconditionViolated";
        case FitErrorCode::NotApplicable: return "NotApplicable";
        case FitErrorCode::EmptyGroup: return "EmptyGroup";
        case FitErrorCode::ZeroVariance: return "ZeroVariance";
        case FitErrorCode::InvalidProbability: return "InvalidProbability";
    }
    return "Unknown";
}

class FitError : public std::runtime_error {
public:
    FitError(FitErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
    FitErrorCode code() const { return code_; }

private:
    FitErrorCode code_;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, long line = -1)
        : std::runtime_error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

}  // namespace ratefit
