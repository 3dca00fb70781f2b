#include "peer/error.hpp"

#include <cstdio>

namespace peer {

std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DivisionByZero: return "DivisionByZero";
    case ErrorKind::InvalidOrder: return "InvalidOrder";
    case ErrorKind::EmptyPrior: return "EmptyPrior";
    case ErrorKind::NonOrthogonalDecomposition: return "NonOrthogonalDecomposition";
    case ErrorKind::ZeroBasis: return "ZeroBasis";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::WrongPath: return "WrongPath";
    case ErrorKind::TooManyComponents: return "TooManyComponents";
    case ErrorKind::WrongPrior: return "WrongPrior";
    case ErrorKind::PerturbationTooLarge: return "PerturbationTooLarge";
    case ErrorKind::FlatLikelihood: return "FlatLikelihood";
    case ErrorKind::EmptyGrid: return "EmptyGrid";
    case ErrorKind::ConstantResponse: return "ConstantResponse";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

namespace {

const char* subject_name(RankSubject s)
{
    switch (s) {
    case RankSubject::X: return "X";
    case RankSubject::L: return "L";
    case RankSubject::Stacked: return "stacked [X; L]";
    }
    return "?";
}

}  // namespace

RankDeficientError::RankDeficientError(RankSubject subject, long numerical_rank, long required_rank)
    : Error(ErrorKind::RankDeficient,
            std::string("rank deficient ") + subject_name(subject) + ": numerical rank "
                + std::to_string(numerical_rank) + ", required " + std::to_string(required_rank)),
      subject_(subject), rank_(numerical_rank), required_(required_rank)
{
}

namespace {

std::string format_alpha(double alpha)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", alpha);
    return buf;
}

}  // namespace

FlatLikelihoodError::FlatLikelihoodError(double boundary_alpha, bool at_lower)
    : Error(ErrorKind::FlatLikelihood,
            std::string("restricted likelihood maximized at the ") + (at_lower ? "lower" : "upper")
                + " bracket end (alpha = " + format_alpha(boundary_alpha) + ")"),
      alpha_(boundary_alpha), lower_(at_lower)
{
}

ParseError::ParseError(long line, long column, const std::string& what)
    : Error(ErrorKind::ParseError,
            "parse error at line " + std::to_string(line) + ", column " + std::to_string(column)
                + ": " + what),
      line_(line), column_(column)
{
}

}  // namespace peer
