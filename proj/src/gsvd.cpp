#include "peer/gsvd.hpp"

#include "peer/error.hpp"
#include "peer/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace peer {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

Index count_above(const Vector& sv, double tol)
{
    Index r = 0;
    for (Index i = 0; i < sv.size(); ++i)
        if (sv(i) > tol) ++r;
    return r;
}

// Thin orthonormal factor of a householder QR.
Matrix thin_q(const Eigen::HouseholderQR<Matrix>& qr, Index cols)
{
    Matrix q = Matrix::Identity(qr.rows(), cols);
    q.applyOnTheLeft(qr.householderQ());
    return q;
}

}  // namespace

Vector GsvdFactors::sigma_full() const
{
    Vector s(p);
    s.head(p - n).setZero();
    s.tail(n) = sigma;
    return s;
}

Vector GsvdFactors::mu_full() const
{
    Vector m(p);
    m.head(p - n).setOnes();
    m.tail(n) = mu;
    return m;
}

GsvdFactors compute_gsvd(const DesignMatrix& Xd, const PenaltyOperator& Lop)
{
    const Matrix& X = Xd.values();
    const Matrix& L0 = Lop.values();
    const Index n = X.rows();
    const Index p = X.cols();
    const Index m0 = L0.rows();
    if (L0.cols() != p)
        throw Error(ErrorKind::DimensionMismatch, "X and L have different column counts");
    if (n > p)
        throw Error(ErrorKind::DimensionMismatch, "GSVD window requires n <= p");
    if (n + m0 < p)
        throw RankDeficientError(RankSubject::Stacked, n + m0, p);

    // Rank decisions use the singular values of the stacked matrix.
    Matrix Z(n + m0, p);
    Z.topRows(n) = X;
    Z.bottomRows(m0) = L0;
    Eigen::HouseholderQR<Matrix> zqr(Z);
    Matrix R = zqr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    const Vector sv_z = checked_svd(R).s;
    const double sigma_max = sv_z.size() ? sv_z(0) : 0.0;
    const double rank_tol = static_cast<double>(std::max(n + m0, p)) * kEps * sigma_max;
    const Index rank_z = count_above(sv_z, rank_tol);
    if (rank_z < p) throw RankDeficientError(RankSubject::Stacked, rank_z, p);

    const Index rank_x = count_above(checked_svd(X).s, rank_tol);
    if (rank_x < n) throw RankDeficientError(RankSubject::X, rank_x, n);

    // Compress L to a full-row-rank operator when needed.
    const Svd lsvd = checked_svd(L0);
    const Index rank_l = count_above(lsvd.s, rank_tol);
    Matrix left;  // m0 x m, empty when no compression happened
    Matrix Lred;
    if (m0 > p || rank_l < m0) {
        left = lsvd.U.leftCols(rank_l);
        Lred = lsvd.s.head(rank_l).asDiagonal() * lsvd.V.leftCols(rank_l).transpose();
    }
    const Matrix& L = left.size() ? Lred : L0;
    const Index m = L.rows();
    if (!(n <= m && m <= p && p <= m + n))
        throw Error(ErrorKind::DimensionMismatch,
                    "GSVD window n <= m <= p <= m + n fails (n=" + std::to_string(n)
                        + ", m=" + std::to_string(m) + ", p=" + std::to_string(p) + ")");

    Matrix Q;
    if (left.size()) {
        Matrix Zr(n + m, p);
        Zr.topRows(n) = X;
        Zr.bottomRows(m) = L;
        Eigen::HouseholderQR<Matrix> rqr(Zr);
        R = rqr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
        Q = thin_q(rqr, p);
    } else {
        Q = thin_q(zqr, p);
    }
    const Matrix Q1 = Q.topRows(n);
    const Matrix Q2 = Q.bottomRows(m);

    // CS step: the SVD of Q1 fixes the shared right factor.
    const Svd csvd = checked_svd(Q1, true);
    const Vector& c = csvd.s;  // length n, descending
    const Matrix& Ufull = csvd.U;
    const Matrix& Y = csvd.V;

    const Index d = p - m;
    const Index q = n + m - p;

    // Column order: null(X), interior ascending in sigma, null(L).
    std::vector<Index> ycols;
    std::vector<Index> ucols;
    ycols.reserve(static_cast<std::size_t>(p));
    for (Index j = n; j < p; ++j) ycols.push_back(j);
    for (Index k = n - 1; k >= d; --k) {
        ycols.push_back(k);
        ucols.push_back(k);
    }
    for (Index k = 0; k < d; ++k) {
        ycols.push_back(k);
        ucols.push_back(k);
    }

    Matrix Yord(p, p);
    for (Index j = 0; j < p; ++j) Yord.col(j) = Y.col(ycols[static_cast<std::size_t>(j)]);

    GsvdFactors f;
    f.n = n;
    f.m = m;
    f.p = p;
    f.q = q;
    f.d = d;
    f.rank_tol = rank_tol;
    f.sigma_tol = static_cast<double>(std::max(n + m, p)) * kEps;

    f.U.resize(n, n);
    for (Index k = 0; k < n; ++k) f.U.col(k) = Ufull.col(ucols[static_cast<std::size_t>(k)]);

    const Matrix T = Q2 * Yord.leftCols(p - d);  // m x m, columns orthogonal
    f.sigma.resize(n);
    f.mu.resize(n);
    for (Index k = 0; k < q; ++k) {
        const double s = c(ucols[static_cast<std::size_t>(k)]);
        const double mu = T.col(p - n + k).norm();
        const double h = std::hypot(s, mu);
        f.sigma(k) = s / h;
        f.mu(k) = mu / h;
    }
    f.sigma.tail(d).setOnes();
    f.mu.tail(d).setZero();

    // V from the normalized columns of Q2 Y, re-orthonormalized in order of
    // descending mu; the correction scaled by mu_k stays at rounding level.
    Vector mu_first(m);
    mu_first.head(p - n).setOnes();
    mu_first.tail(q) = f.mu.head(q);
    Matrix Vraw = T * mu_first.cwiseInverse().asDiagonal();
    Eigen::HouseholderQR<Matrix> vqr(Vraw);
    Matrix Vq = thin_q(vqr, m);
    for (Index j = 0; j < m; ++j)
        if (vqr.matrixQR()(j, j) < 0) Vq.col(j) = -Vq.col(j);
    f.V = left.size() ? Matrix(left * Vq) : Vq;

    f.W = R.triangularView<Eigen::Upper>().solve(Yord);
    f.Wtilde = R.transpose() * Yord;

    f.gamma = f.sigma.head(n - d).cwiseQuotient(f.mu.head(n - d));
    return f;
}

Vector tikhonov_filters(const GsvdFactors& f, double alpha)
{
    const Index nd = f.n_minus_d();
    Vector filters(nd);
    for (Index k = 0; k < nd; ++k) {
        const double s2 = f.sigma(k) * f.sigma(k);
        const double denom = s2 + alpha * f.mu(k) * f.mu(k);
        filters(k) = denom > 0 ? s2 / denom : 0.0;
    }
    return filters;
}

namespace {

Vector expansion_coefficients(const GsvdFactors& f, const Vector& y, const Vector& filters)
{
    const Index nd = f.n_minus_d();
    if (y.size() != f.n) throw Error(ErrorKind::DimensionMismatch, "response length differs from n");
    if (filters.size() != nd)
        throw Error(ErrorKind::DimensionMismatch, "filter vector must have length n - d");
    if (!filters.allFinite()) throw Error(ErrorKind::InvalidArgument, "filters must be finite");
    const Vector uty = f.U.transpose() * y;
    Vector coef(f.n);
    for (Index k = 0; k < nd; ++k) {
        if (filters(k) == 0.0) {
            coef(k) = 0.0;
            continue;
        }
        if (f.sigma(k) <= f.sigma_tol)
            throw Error(ErrorKind::DivisionByZero,
                        "nonzero filter on a vanishing generalized singular value (k="
                            + std::to_string(k) + ")");
        coef(k) = filters(k) * uty(k) / f.sigma(k);
    }
    coef.tail(f.d) = uty.tail(f.d);
    return coef;
}

}  // namespace

Matrix expansion_terms(const GsvdFactors& f, const Vector& y, const Vector& filters)
{
    const Vector coef = expansion_coefficients(f, y, filters);
    return f.Wn() * coef.asDiagonal();
}

Vector filter_expansion(const GsvdFactors& f, const Vector& y, const Vector& filters)
{
    return f.Wn() * expansion_coefficients(f, y, filters);
}

PenaltyStructure penalty_structure(const PenaltyOperator& L)
{
    if (L.structure()) return *L.structure();
    const Matrix& A = L.values();
    const Index m = A.rows();
    const Index p = A.cols();
    const Svd svd = checked_svd(A, true);
    const Vector& sv = svd.s;
    const double tol = static_cast<double>(std::max(m, p)) * kEps * (sv.size() ? sv(0) : 0.0);
    const Index r = count_above(sv, tol);
    PenaltyStructure s;
    s.pseudo_inverse = svd.V.leftCols(r) * sv.head(r).cwiseInverse().asDiagonal() * svd.U.leftCols(r).transpose();
    s.null_basis = svd.V.rightCols(p - r);
    return s;
}

WeightedInverse weighted_inverse(const DesignMatrix& Xd, const PenaltyOperator& L)
{
    const Matrix& X = Xd.values();
    if (L.p() != X.cols()) throw Error(ErrorKind::DimensionMismatch, "X and L have different column counts");
    PenaltyStructure s = penalty_structure(L);
    WeightedInverse out;
    out.null_dim = s.null_basis.cols();
    if (out.null_dim == 0) {
        out.pinv = std::move(s.pseudo_inverse);
        out.offset_map = Matrix::Zero(X.cols(), X.rows());
        return out;
    }
    const Matrix XN = X * s.null_basis;
    const Svd svd = checked_svd(XN);
    const Vector& sv = svd.s;
    const double tol = static_cast<double>(std::max(XN.rows(), XN.cols())) * kEps
                       * std::max(sv.size() ? sv(0) : 0.0, X.norm() * kEps);
    const Index r = count_above(sv, tol);
    if (r < out.null_dim) throw RankDeficientError(RankSubject::Stacked, X.cols() - out.null_dim + r, X.cols());
    const Matrix XNpinv = svd.V * sv.cwiseInverse().asDiagonal() * svd.U.transpose();
    out.offset_map = s.null_basis * XNpinv;
    out.pinv = s.pseudo_inverse - out.offset_map * (X * s.pseudo_inverse);
    return out;
}

Matrix weighted_pinv(const DesignMatrix& X, const PenaltyOperator& L)
{
    return weighted_inverse(X, L).pinv;
}

GsvdResiduals gsvd_residuals(const GsvdFactors& f, const Matrix& X, const Matrix& L)
{
    GsvdResiduals r;
    const Index n = f.n;
    const Index p = f.p;
    const Index m = f.m;

    Matrix S = Matrix::Zero(n, p);
    S.rightCols(n) = f.sigma.asDiagonal();
    Matrix M = Matrix::Zero(m, p);
    M.leftCols(m).diagonal() = f.mu_full().head(m);
    const Matrix Winv = f.Wtilde.transpose();

    const double xn = X.norm();
    const double ln = L.norm();
    r.x_reconstruction = (X - f.U * S * Winv).norm() / (xn > 0 ? xn : 1.0);
    r.l_reconstruction = (L - f.V * M * Winv).norm() / (ln > 0 ? ln : 1.0);

    const Vector sf = f.sigma_full();
    const Vector mf = f.mu_full();
    r.normalization = (sf.cwiseAbs2() + mf.cwiseAbs2() - Vector::Ones(p)).cwiseAbs().maxCoeff();

    const Matrix XW = X * f.W;
    const Matrix LW = L * f.W;
    const Matrix Gx = XW.transpose() * XW;
    const Matrix Gl = LW.transpose() * LW;
    auto offdiag = [](const Matrix& G) {
        Matrix o = G;
        o.diagonal().setZero();
        return o.cwiseAbs().maxCoeff();
    };
    r.x_offdiag = offdiag(Gx) / (xn > 0 ? xn * xn : 1.0);
    r.l_offdiag = offdiag(Gl) / (ln > 0 ? ln * ln : 1.0);
    r.diag_sum = ((Gx + Gl).diagonal() - Vector::Ones(p)).cwiseAbs().maxCoeff();
    r.null_residual = f.d > 0 ? (L * f.W.rightCols(f.d)).norm() / (ln > 0 ? ln : 1.0) : 0.0;
    r.u_orthonormality = (f.U.transpose() * f.U - Matrix::Identity(n, n)).norm();
    r.v_orthonormality = (f.V.transpose() * f.V - Matrix::Identity(f.V.cols(), f.V.cols())).norm();
    return r;
}

}  // namespace peer
