#pragma once

#include "peer/types.hpp"

namespace peer {

/// Joint decomposition X = U [0 S] W^{-1}, L = V [M 0] W^{-1}.
///
/// Indexing follows the ascending-sigma convention: the first p - n columns of
/// W span null(X), the next q = n + m - p carry 0 < sigma_k < 1 in ascending
/// order, and the last d = p - m span null(L) with sigma_k = 1, mu_k = 0.
/// `sigma`, `mu` and the columns of U refer to the last n columns of W.
///
/// When L is row-rank deficient or taller than p it is first compressed to an
/// orthonormal row basis, so V is m_L x m with orthonormal columns and m is the
/// numerical rank of L.
struct GsvdFactors {
    Matrix U;       ///< n x n
    Matrix V;       ///< m_L x m
    Matrix W;       ///< p x p
    Matrix Wtilde;  ///< p x p, (W')^{-1}
    Vector sigma;   ///< length n, ascending
    Vector mu;      ///< length n, descending, trailing zeros for null(L)
    Vector gamma;   ///< length n - d, sigma_k / mu_k

    Index n = 0;
    Index m = 0;  ///< rank of L
    Index p = 0;
    Index q = 0;
    Index d = 0;
    double rank_tol = 0.0;   ///< absolute tolerance on singular values of [X; L]
    double sigma_tol = 0.0;  ///< scale-free tolerance applied to sigma_k

    Index n_minus_d() const noexcept { return n - d; }

    /// p x n block of W paired with sigma/mu.
    auto Wn() const { return W.rightCols(n); }
    auto Wtilde_n() const { return Wtilde.rightCols(n); }

    /// sigma / mu over all p columns of W (null(X) block has sigma = 0, mu = 1).
    Vector sigma_full() const;
    Vector mu_full() const;
};

GsvdFactors compute_gsvd(const DesignMatrix& X, const PenaltyOperator& L);

/// Tikhonov filter factors sigma_k^2 / (sigma_k^2 + alpha mu_k^2), k < n - d.
Vector tikhonov_filters(const GsvdFactors& f, double alpha);

/// p x n matrix whose k-th column is the k-th term of the filtered expansion;
/// columns k >= n - d are the unfiltered null(L) terms.
Matrix expansion_terms(const GsvdFactors& f, const Vector& y, const Vector& filters);

/// Sum of `expansion_terms` computed without materializing the columns.
Vector filter_expansion(const GsvdFactors& f, const Vector& y, const Vector& filters);

/// L^+ and an orthonormal basis of null(L), from the cached structure when the
/// constructor supplied one, otherwise from an SVD of L.
PenaltyStructure penalty_structure(const PenaltyOperator& L);

/// Pieces of the X-weighted generalized inverse.
struct WeightedInverse {
    Matrix pinv;           ///< p x m, L_X^+
    Matrix offset_map;     ///< p x n, N (X N)^+ ; zero columns when null(L) is trivial
    Index null_dim = 0;
};

WeightedInverse weighted_inverse(const DesignMatrix& X, const PenaltyOperator& L);

/// L_X^+ = (I - [X (I - L^+ L)]^+ X) L^+.
Matrix weighted_pinv(const DesignMatrix& X, const PenaltyOperator& L);

/// Residuals of the decomposition, used by tests and the `gsvd` command.
struct GsvdResiduals {
    double x_reconstruction = 0;   ///< ||X - U S W^{-1}||_F / ||X||_F
    double l_reconstruction = 0;   ///< ||L - V M W^{-1}||_F / ||L||_F
    double normalization = 0;      ///< max |sigma^2 + mu^2 - 1|
    double x_offdiag = 0;          ///< max offdiag |W'X'XW| / ||X||_F^2
    double l_offdiag = 0;          ///< max offdiag |W'L'LW| / ||L||_F^2
    double diag_sum = 0;           ///< max |diag(W'X'XW + W'L'LW) - 1|
    double null_residual = 0;      ///< ||L W_null||_F / ||L||_F
    double u_orthonormality = 0;   ///< ||U'U - I||_F
    double v_orthonormality = 0;   ///< ||V'V - I||_F
};

GsvdResiduals gsvd_residuals(const GsvdFactors& f, const Matrix& X, const Matrix& L);

}  // namespace peer
