#include "peer/linalg.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace peer {

namespace {

template <class Solver>
Svd extract(const Solver& svd)
{
    return Svd{svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

bool verified(const Matrix& A, const Svd& f)
{
    const Index k = f.s.size();
    if (!f.U.allFinite() || !f.V.allFinite() || !f.s.allFinite()) return false;
    const double tol = 64.0 * static_cast<double>(std::max(A.rows(), A.cols())) * std::numeric_limits<double>::epsilon();
    const double scale = std::max(A.norm(), std::numeric_limits<double>::min());
    const Matrix recon = f.U * f.s.asDiagonal() * f.V.leftCols(k).transpose();
    if ((A - recon).norm() > tol * scale) return false;
    if ((f.U.transpose() * f.U - Matrix::Identity(k, k)).norm() > tol) return false;
    const Index vc = f.V.cols();
    if ((f.V.transpose() * f.V - Matrix::Identity(vc, vc)).norm() > tol) return false;
    for (Index i = 1; i < k; ++i)
        if (f.s(i) > f.s(i - 1)) return false;
    return true;
}

}  // namespace

Svd checked_svd(const Matrix& A, bool full_v)
{
    const Index k = std::min(A.rows(), A.cols());
    if (k == 0) {
        return Svd{Matrix(A.rows(), 0), Vector(0),
                   full_v ? Matrix(Matrix::Identity(A.cols(), A.cols())) : Matrix(A.cols(), 0)};
    }
    const unsigned opts = Eigen::ComputeThinU | (full_v ? Eigen::ComputeFullV : Eigen::ComputeThinV);
    Svd f = extract(Eigen::BDCSVD<Matrix>(A, opts));
    if (verified(A, f)) return f;
    return extract(Eigen::JacobiSVD<Matrix>(A, opts));
}

Index numerical_rank(const Vector& s, double tol)
{
    Index r = 0;
    while (r < s.size() && s(r) > tol) ++r;
    return r;
}

std::pair<Matrix, Vector> drop_intercept(const Matrix& Xc, const Vector& yc)
{
    const Index n = Xc.rows();
    Vector v = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    v(0) += 1.0;
    const double vv = v.squaredNorm();
    const Matrix HX = Xc - (2.0 / vv) * v * (v.transpose() * Xc);
    const Vector Hy = yc - (2.0 / vv) * v * v.dot(yc);
    return {HX.bottomRows(n - 1), Hy.tail(n - 1)};
}

}  // namespace peer
