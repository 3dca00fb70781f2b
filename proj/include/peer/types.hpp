#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string_view>

namespace peer {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// n x p matrix of sampled predictor curves, one curve per row.
class DesignMatrix {
public:
    DesignMatrix() = default;

    /// Validates finiteness and n, p >= 2. When `centered` is true the columns
    /// must already have mean zero; use `centered_copy` to center raw data.
    explicit DesignMatrix(Matrix values, bool centered = false);

    static DesignMatrix centered_copy(const Matrix& raw);

    const Matrix& values() const noexcept { return values_; }
    Index n() const noexcept { return values_.rows(); }
    Index p() const noexcept { return values_.cols(); }
    bool centered() const noexcept { return centered_; }

    /// K = X'X / n.
    Matrix empirical_covariance() const;

private:
    Matrix values_;
    bool centered_ = false;
};

enum class PenaltyKind { Identity, Derivative, Projection, Multispace, Goutis, Stein, Custom };

std::string_view to_string(PenaltyKind kind);

/// Structure known at construction time that lets downstream solvers skip a
/// dense SVD of L.
struct PenaltyStructure {
    Matrix pseudo_inverse;  ///< p x m matrix L^+
    Matrix null_basis;      ///< p x d orthonormal basis of null(L); d may be 0
};

/// m x p discretized penalty operator L.
class PenaltyOperator {
public:
    PenaltyOperator() = default;
    PenaltyOperator(Matrix values, PenaltyKind kind,
                    std::optional<Index> nullspace_dim_hint = std::nullopt);

    const Matrix& values() const noexcept { return values_; }
    PenaltyKind kind() const noexcept { return kind_; }
    std::optional<Index> nullspace_dim_hint() const noexcept { return null_hint_; }
    Index m() const noexcept { return values_.rows(); }
    Index p() const noexcept { return values_.cols(); }

    const std::optional<PenaltyStructure>& structure() const noexcept { return structure_; }
    void set_structure(PenaltyStructure s) { structure_ = std::move(s); }

    /// Returns a copy of this operator scaled by s (structure rescaled too).
    PenaltyOperator scaled(double s) const;

private:
    Matrix values_;
    PenaltyKind kind_ = PenaltyKind::Custom;
    std::optional<Index> null_hint_;
    std::optional<PenaltyStructure> structure_;
};

bool all_finite(const Matrix& m);

}  // namespace peer
