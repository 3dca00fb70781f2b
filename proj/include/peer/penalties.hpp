#pragma once

#include "peer/types.hpp"

#include <vector>

namespace peer {

/// Sample locations t_1 < ... < t_p in [0, 1].
struct GridSpec {
    Vector t;

    static GridSpec equally_spaced(Index p);
    static GridSpec from_locations(Vector t);
    Index p() const noexcept { return t.size(); }
};

/// Prior subspace Q = span{q_j} with its orthogonal projector P_Q = Q Q^+.
struct SubspacePrior {
    Matrix basis;              ///< p x d_raw, as supplied
    Matrix orthonormal_basis;  ///< p x d
    Matrix projector;          ///< p x p, symmetric idempotent

    Index d() const noexcept { return orthonormal_basis.cols(); }
    Index p() const noexcept { return projector.rows(); }
};

/// Orthonormalizes `raw_basis` and drops numerically dependent directions.
SubspacePrior orthonormal_projector(const Matrix& raw_basis);

/// Upper-bidiagonal first difference D with unit diagonal and last row e_p'.
Matrix difference_matrix(Index p);

/// D^order + shift I for order in {0, 1, 2}.
PenaltyOperator derivative_penalty(Index p, int order, double shift = 0.0);

/// a (I - P_Q) + b P_Q.
PenaltyOperator projection_penalty(const SubspacePrior& prior, double a, double b);

/// sum_j w_j P_j over mutually orthogonal projectors.
PenaltyOperator multispace_penalty(const std::vector<Matrix>& projectors, const std::vector<double>& weights);

/// ((Delta' Delta)^+)^{1/2} with Delta = D^2.
PenaltyOperator goutis_penalty(Index p);

/// D V' from the thin SVD X = U D V'.
PenaltyOperator stein_penalty(const DesignMatrix& X);

PenaltyOperator identity_penalty(Index p);

}  // namespace peer
