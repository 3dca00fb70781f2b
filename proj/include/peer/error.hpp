#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace peer {

enum class ErrorKind {
    RankDeficient,
    DimensionMismatch,
    DivisionByZero,
    InvalidOrder,
    EmptyPrior,
    NonOrthogonalDecomposition,
    ZeroBasis,
    SingularSystem,
    WrongPath,
    TooManyComponents,
    WrongPrior,
    PerturbationTooLarge,
    FlatLikelihood,
    EmptyGrid,
    ConstantResponse,
    ParseError,
    ShapeMismatch,
    InvalidArgument,
    ConfigError,
    IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-readable kind so the
/// CLI can emit a structured error record.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Which member of the (X, L) pair failed a rank test.
enum class RankSubject { X, L, Stacked };

class RankDeficientError : public Error {
public:
    RankDeficientError(RankSubject subject, long numerical_rank, long required_rank);

    RankSubject subject() const noexcept { return subject_; }
    long numerical_rank() const noexcept { return rank_; }
    long required_rank() const noexcept { return required_; }

private:
    RankSubject subject_;
    long rank_;
    long required_;
};

/// Raised when the restricted likelihood is maximized at a bracket end.
class FlatLikelihoodError : public Error {
public:
    FlatLikelihoodError(double boundary_alpha, bool at_lower);

    double boundary_alpha() const noexcept { return alpha_; }
    bool at_lower() const noexcept { return lower_; }

private:
    double alpha_;
    bool lower_;
};

class ParseError : public Error {
public:
    ParseError(long line, long column, const std::string& what);

    long line() const noexcept { return line_; }
    long column() const noexcept { return column_; }

private:
    long line_;
    long column_;
};

}  // namespace peer
