#pragma once

#include "peer/types.hpp"

#include <utility>

namespace peer {

/// A = U diag(s) V' with s descending. U is thin; V is thin unless full_v was
/// requested, in which case its trailing columns complete an orthonormal basis.
struct Svd {
    Matrix U;
    Vector s;
    Matrix V;
};

/// Divide-and-conquer SVD whose factors are verified (reconstruction and
/// orthonormality); falls back to one-sided Jacobi when verification fails.
Svd checked_svd(const Matrix& A, bool full_v = false);

/// Numerical rank of a descending singular value vector at `tol`.
Index numerical_rank(const Vector& s, double tol);

/// Rows 2..n of H X and H y, where the Householder H maps 1/sqrt(n) to e_1.
/// An orthonormal change of basis onto the complement of the intercept, so a
/// centered design keeps X'X while losing its redundant row.
std::pair<Matrix, Vector> drop_intercept(const Matrix& Xc, const Vector& yc);

}  // namespace peer
