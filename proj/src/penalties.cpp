#include "peer/penalties.hpp"

#include "peer/error.hpp"
#include "peer/linalg.hpp"

#include <cmath>
#include <limits>

namespace peer {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

Matrix symmetrized(const Matrix& a)
{
    return 0.5 * (a + a.transpose());
}

}  // namespace

GridSpec GridSpec::equally_spaced(Index p)
{
    if (p < 2) throw Error(ErrorKind::InvalidArgument, "grid needs at least two points");
    return GridSpec{Vector::LinSpaced(p, 0.0, 1.0)};
}

GridSpec GridSpec::from_locations(Vector t)
{
    for (Index i = 1; i < t.size(); ++i)
        if (!(t(i) > t(i - 1))) throw Error(ErrorKind::InvalidArgument, "grid locations must be strictly increasing");
    return GridSpec{std::move(t)};
}

SubspacePrior orthonormal_projector(const Matrix& raw_basis)
{
    if (raw_basis.cols() == 0 || raw_basis.rows() == 0)
        throw Error(ErrorKind::ZeroBasis, "prior basis is empty");
    if (!raw_basis.allFinite()) throw Error(ErrorKind::InvalidArgument, "prior basis has non-finite entries");
    const Svd svd = checked_svd(raw_basis);
    const Vector& sv = svd.s;
    const double smax = sv.size() ? sv(0) : 0.0;
    if (!(smax > 0)) throw Error(ErrorKind::ZeroBasis, "prior basis has numerical rank 0");
    const double tol = static_cast<double>(std::max(raw_basis.rows(), raw_basis.cols())) * kEps * smax;
    Index r = 0;
    while (r < sv.size() && sv(r) > tol) ++r;

    SubspacePrior prior;
    prior.basis = raw_basis;
    prior.orthonormal_basis = svd.U.leftCols(r);
    prior.projector = symmetrized(prior.orthonormal_basis * prior.orthonormal_basis.transpose());
    return prior;
}

Matrix difference_matrix(Index p)
{
    Matrix D = Matrix::Identity(p, p);
    for (Index i = 0; i + 1 < p; ++i) D(i, i + 1) = -1.0;
    return D;
}

PenaltyOperator identity_penalty(Index p)
{
    PenaltyOperator L(Matrix::Identity(p, p), PenaltyKind::Identity, Index{0});
    L.set_structure({Matrix::Identity(p, p), Matrix(p, 0)});
    return L;
}

PenaltyOperator derivative_penalty(Index p, int order, double shift)
{
    if (order < 0 || order > 2) throw Error(ErrorKind::InvalidOrder, "derivative order must be 0, 1 or 2");
    if (order == 2 && p < 3) throw Error(ErrorKind::InvalidArgument, "second-order penalty needs p >= 3");
    if (p < 1) throw Error(ErrorKind::InvalidArgument, "grid size must be positive");
    if (!(shift >= 0.0) || !std::isfinite(shift))
        throw Error(ErrorKind::InvalidArgument, "shift must be a nonnegative finite scalar");

    Matrix A = Matrix::Identity(p, p);
    if (order >= 1) {
        const Matrix D = difference_matrix(p);
        A = order == 1 ? D : Matrix(D * D);
    }
    if (shift > 0) A.diagonal().array() += shift;

    const PenaltyKind kind = (order == 0 && shift == 0.0) ? PenaltyKind::Identity : PenaltyKind::Derivative;
    PenaltyOperator L(A, kind, Index{0});
    // Upper triangular with positive diagonal.
    Matrix inv = A.triangularView<Eigen::Upper>().solve(Matrix::Identity(p, p));
    L.set_structure({std::move(inv), Matrix(p, 0)});
    return L;
}

PenaltyOperator projection_penalty(const SubspacePrior& prior, double a, double b)
{
    const Index d = prior.d();
    const Index p = prior.p();
    if (d == 0) throw Error(ErrorKind::EmptyPrior, "projection penalty needs a nonempty prior");
    if (!(a > 0) || !std::isfinite(a)) throw Error(ErrorKind::InvalidArgument, "a must be positive");
    if (!(b >= 0) || !std::isfinite(b)) throw Error(ErrorKind::InvalidArgument, "b must be nonnegative");
    if (d >= p) throw Error(ErrorKind::InvalidArgument, "prior dimension must be below p");

    const Matrix I = Matrix::Identity(p, p);
    const Matrix& P = prior.projector;
    Matrix A = a == b ? Matrix(a * I) : symmetrized(a * (I - P) + b * P);

    PenaltyOperator L(std::move(A), PenaltyKind::Projection,
                      b == 0.0 ? std::optional<Index>(d) : std::optional<Index>(0));
    PenaltyStructure s;
    if (b > 0) {
        s.pseudo_inverse = symmetrized((1.0 / a) * (I - P) + (1.0 / b) * P);
        s.null_basis = Matrix(p, 0);
    } else {
        s.pseudo_inverse = symmetrized((1.0 / a) * (I - P));
        s.null_basis = prior.orthonormal_basis;
    }
    L.set_structure(std::move(s));
    return L;
}

PenaltyOperator multispace_penalty(const std::vector<Matrix>& projectors, const std::vector<double>& weights)
{
    if (projectors.empty()) throw Error(ErrorKind::EmptyPrior, "multispace penalty needs at least one projector");
    if (projectors.size() != weights.size())
        throw Error(ErrorKind::InvalidArgument, "one weight per projector is required");
    const Index p = projectors.front().rows();
    for (const auto& P : projectors) {
        if (P.rows() != p || P.cols() != p)
            throw Error(ErrorKind::DimensionMismatch, "projectors must all be p x p");
        if ((P - P.transpose()).norm() > 1e-10 * std::max(1.0, P.norm())
            || (P * P - P).norm() > 1e-10 * std::max(1.0, P.norm()))
            throw Error(ErrorKind::NonOrthogonalDecomposition, "input is not an orthogonal projector");
    }
    for (double w : weights)
        if (!(w >= 0) || !std::isfinite(w)) throw Error(ErrorKind::InvalidArgument, "weights must be nonnegative");
    for (std::size_t i = 0; i < projectors.size(); ++i)
        for (std::size_t j = i + 1; j < projectors.size(); ++j)
            if ((projectors[i] * projectors[j]).norm() > 1e-10)
                throw Error(ErrorKind::NonOrthogonalDecomposition,
                            "projectors " + std::to_string(i) + " and " + std::to_string(j) + " are not orthogonal");

    Matrix A = Matrix::Zero(p, p);
    for (std::size_t j = 0; j < projectors.size(); ++j) A += weights[j] * projectors[j];
    return PenaltyOperator(symmetrized(A), PenaltyKind::Multispace);
}

PenaltyOperator goutis_penalty(Index p)
{
    if (p < 3) throw Error(ErrorKind::InvalidArgument, "Goutis penalty needs p >= 3");
    const Matrix D = difference_matrix(p);
    const Matrix Delta = D * D;
    // (Delta'Delta)^{+1/2} = V Sigma^+ V' from Delta = U Sigma V'; working on
    // Delta directly keeps the small eigenvalues accurate.
    const Svd svd = checked_svd(Delta, true);
    const Vector& sv = svd.s;
    const double tol = static_cast<double>(p) * kEps * sv(0);
    Vector inv(p);
    Vector fwd(p);
    Index nulls = 0;
    for (Index k = 0; k < p; ++k) {
        if (sv(k) > tol) {
            inv(k) = 1.0 / sv(k);
            fwd(k) = sv(k);
        } else {
            inv(k) = 0.0;
            fwd(k) = 0.0;
            ++nulls;
        }
    }
    const Matrix& V = svd.V;
    Matrix A = symmetrized(V * inv.asDiagonal() * V.transpose());
    PenaltyOperator L(std::move(A), PenaltyKind::Goutis, nulls);
    if (nulls == 0) L.set_structure({symmetrized(V * fwd.asDiagonal() * V.transpose()), Matrix(p, 0)});
    return L;
}

PenaltyOperator stein_penalty(const DesignMatrix& Xd)
{
    const Matrix& X = Xd.values();
    const Svd svd = checked_svd(X);
    const Vector& sv = svd.s;
    const Index n = X.rows();
    const double tol = static_cast<double>(std::max(X.rows(), X.cols())) * kEps * (sv.size() ? sv(0) : 0.0);
    Index r = 0;
    while (r < sv.size() && sv(r) > tol) ++r;
    if (r < n) throw RankDeficientError(RankSubject::X, r, n);
    Matrix A = sv.asDiagonal() * svd.V.transpose();
    return PenaltyOperator(std::move(A), PenaltyKind::Stein);
}

}  // namespace peer
