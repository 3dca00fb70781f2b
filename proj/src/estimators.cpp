#include "peer/estimators.hpp"

#include "peer/error.hpp"
#include "peer/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace peer {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void check_response(const DesignMatrix& X, const Vector& y)
{
    if (y.size() != X.n()) throw Error(ErrorKind::DimensionMismatch, "response length differs from n");
    if (!y.allFinite()) throw Error(ErrorKind::InvalidArgument, "response has non-finite entries");
}

PenalizedFit finish(PenalizedFit fit, const DesignMatrix& X)
{
    fit.fitted = X.values() * fit.beta;
    return fit;
}

PenalizedFit fit_direct(const DesignMatrix& Xd, const PenaltyOperator& L, const Vector& y, double alpha)
{
    const Matrix& X = Xd.values();
    Matrix A = X.transpose() * X;
    const Matrix LtL = L.values().transpose() * L.values();
    A.noalias() += alpha * LtL;
    const Vector rhs = X.transpose() * y;

    PenalizedFit fit;
    fit.method = FitMethod::Direct;
    fit.alpha = alpha;
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success) {
        const double jitter = 1e-12 * A.trace();
        A.diagonal().array() += jitter;
        llt.compute(A);
        if (llt.info() != Eigen::Success)
            throw Error(ErrorKind::SingularSystem, "X'X + alpha L'L is numerically singular");
        fit.jitter_applied = true;
    }
    fit.beta = llt.solve(rhs);
    // Refinement against the unjittered system with residuals accumulated in
    // extended precision from X and L directly.
    if (!fit.jitter_applied) {
        using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
        using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
        const LMatrix Xl = X.cast<long double>();
        const LMatrix Ll = L.values().cast<long double>();
        const LVector rhs_l = Xl.transpose() * y.cast<long double>();
        LVector beta_l = fit.beta.cast<long double>();
        for (int step = 0; step < 6; ++step) {
            const LVector r = rhs_l - Xl.transpose() * (Xl * beta_l)
                              - static_cast<long double>(alpha) * (Ll.transpose() * (Ll * beta_l));
            const Vector delta = llt.solve(r.cast<double>());
            beta_l += delta.cast<long double>();
            if (delta.norm() <= 1e-17 * beta_l.cast<double>().norm()) break;
        }
        fit.beta = beta_l.cast<double>();
    }
    return fit;
}

}  // namespace

std::string_view to_string(FitPath path)
{
    switch (path) {
    case FitPath::Direct: return "direct";
    case FitPath::Gsvd: return "gsvd";
    case FitPath::StandardForm: return "standard_form";
    }
    return "direct";
}

std::string_view to_string(FitMethod method)
{
    switch (method) {
    case FitMethod::Direct: return "direct";
    case FitMethod::Gsvd: return "gsvd";
    case FitMethod::StandardForm: return "standard_form";
    case FitMethod::Pcr: return "pcr";
    case FitMethod::AbFamily: return "ab_family";
    case FitMethod::MinNorm: return "min_norm";
    case FitMethod::FilterFamily: return "filter_family";
    case FitMethod::Goutis: return "goutis";
    case FitMethod::Stein: return "stein";
    case FitMethod::Ideal: return "ideal";
    }
    return "direct";
}

FitPath parse_fit_path(std::string_view name)
{
    if (name == "direct") return FitPath::Direct;
    if (name == "gsvd") return FitPath::Gsvd;
    if (name == "standard_form") return FitPath::StandardForm;
    throw Error(ErrorKind::InvalidArgument, "unknown fit path '" + std::string(name) + "'");
}

ThinSvd thin_svd(const Matrix& X)
{
    Svd svd = checked_svd(X);
    ThinSvd out;
    out.U = std::move(svd.U);
    out.s = std::move(svd.s);
    out.V = std::move(svd.V);
    const double tol = static_cast<double>(std::max(X.rows(), X.cols())) * kEps * (out.s.size() ? out.s(0) : 0.0);
    while (out.rank < out.s.size() && out.s(out.rank) > tol) ++out.rank;
    return out;
}

PenalizedFit fit_from_factors(const GsvdFactors& f, const DesignMatrix& X, const Vector& y, double alpha)
{
    check_response(X, y);
    PenalizedFit fit;
    fit.method = FitMethod::Gsvd;
    fit.alpha = alpha;
    fit.filters = tikhonov_filters(f, alpha);
    fit.components = expansion_terms(f, y, fit.filters);
    fit.null_terms = f.d;
    fit.beta = fit.components.rowwise().sum();
    return finish(std::move(fit), X);
}

PenalizedFit fit_penalized(const DesignMatrix& X, const PenaltyOperator& L, const Vector& y, double alpha,
                           FitPath path)
{
    check_response(X, y);
    if (!(alpha >= 0) || !std::isfinite(alpha)) throw Error(ErrorKind::InvalidArgument, "alpha must be >= 0");
    if (L.p() != X.p()) throw Error(ErrorKind::DimensionMismatch, "X and L have different column counts");
    switch (path) {
    case FitPath::Direct: return finish(fit_direct(X, L, y, alpha), X);
    case FitPath::Gsvd: return fit_from_factors(compute_gsvd(X, L), X, y, alpha);
    case FitPath::StandardForm: {
        StandardFormSolver solver(X, L, y);
        PenalizedFit fit;
        fit.method = FitMethod::StandardForm;
        fit.alpha = alpha;
        fit.beta = solver.beta(alpha);
        const Vector& s = solver.singular_values();
        fit.filters = s.cwiseAbs2().cwiseQuotient((s.cwiseAbs2().array() + alpha).matrix());
        return finish(std::move(fit), X);
    }
    }
    throw Error(ErrorKind::InvalidArgument, "unknown fit path");
}

std::vector<Vector> partial_sums(const PenalizedFit& fit, const std::vector<Index>& ks, PartialSumOrder order)
{
    if (fit.components.cols() == 0)
        throw Error(ErrorKind::WrongPath, "partial sums need a fit produced by the gsvd path");
    const Index total = fit.components.cols();
    std::vector<Vector> out;
    out.reserve(ks.size());
    for (Index k : ks) {
        if (k < 0 || k > total)
            throw Error(ErrorKind::InvalidArgument, "partial-sum cutoff " + std::to_string(k) + " out of range");
        if (order == PartialSumOrder::Expansion)
            out.emplace_back(fit.components.leftCols(k).rowwise().sum());
        else
            out.emplace_back(fit.components.rightCols(k).rowwise().sum());
    }
    return out;
}

namespace {

// beta = V diag(filters / s) U'y over the leading `rank` singular triples.
PenalizedFit svd_filter_fit(const DesignMatrix& X, const ThinSvd& svd, const Vector& y, const Vector& filters,
                            FitMethod method)
{
    const Index r = filters.size();
    Vector coef = (svd.U.leftCols(r).transpose() * y).cwiseProduct(filters).cwiseQuotient(svd.s.head(r));
    PenalizedFit fit;
    fit.method = method;
    fit.filters = filters;
    fit.beta = svd.V.leftCols(r) * coef;
    return finish(std::move(fit), X);
}

}  // namespace

PenalizedFit fit_pcr(const DesignMatrix& X, const Vector& y, Index d_components)
{
    check_response(X, y);
    const ThinSvd svd = thin_svd(X.values());
    if (d_components < 1 || d_components > svd.rank)
        throw Error(ErrorKind::TooManyComponents, "PCR with " + std::to_string(d_components)
                                                      + " components exceeds rank " + std::to_string(svd.rank));
    Vector filters = Vector::Zero(svd.rank);
    filters.head(d_components).setOnes();
    return svd_filter_fit(X, svd, y, filters, FitMethod::Pcr);
}

PenalizedFit fit_min_norm(const DesignMatrix& X, const Vector& y)
{
    check_response(X, y);
    const ThinSvd svd = thin_svd(X.values());
    return svd_filter_fit(X, svd, y, Vector::Ones(svd.rank), FitMethod::MinNorm);
}

PenalizedFit fit_filter_family(const DesignMatrix& X, const Vector& y, const std::function<double(double)>& phi,
                               double h)
{
    check_response(X, y);
    if (!(h > 0)) throw Error(ErrorKind::InvalidArgument, "h must be positive");
    const ThinSvd svd = thin_svd(X.values());
    Vector filters(svd.rank);
    const double h2 = h * h;
    for (Index k = 0; k < svd.rank; ++k) {
        const double s2 = svd.s(k) * svd.s(k);
        const double value = phi(s2 / h2);
        if (!std::isfinite(value)) throw Error(ErrorKind::InvalidArgument, "phi is not finite on the spectrum");
        // Coefficient (s / h^2) phi(s^2 / h^2) equals filter / s.
        filters(k) = s2 / h2 * value;
    }
    return svd_filter_fit(X, svd, y, filters, FitMethod::FilterFamily);
}

PenalizedFit fit_ideal_filter(const DesignMatrix& X, const Vector& y, const Vector& beta_true, double sigma_eps)
{
    check_response(X, y);
    if (beta_true.size() != X.p()) throw Error(ErrorKind::DimensionMismatch, "beta_true must have length p");
    if (!(sigma_eps >= 0)) throw Error(ErrorKind::InvalidArgument, "sigma_eps must be nonnegative");
    const ThinSvd svd = thin_svd(X.values());
    const Vector proj = svd.V.leftCols(svd.rank).transpose() * beta_true;
    Vector filters(svd.rank);
    const double var = sigma_eps * sigma_eps;
    for (Index k = 0; k < svd.rank; ++k) {
        const double signal = svd.s(k) * svd.s(k) * proj(k) * proj(k);
        filters(k) = signal > 0 ? signal / (signal + var) : 0.0;
    }
    return svd_filter_fit(X, svd, y, filters, FitMethod::Ideal);
}

PenalizedFit fit_goutis(const DesignMatrix& X, const Vector& y, double alpha)
{
    PenalizedFit fit = fit_penalized(X, goutis_penalty(X.p()), y, alpha, FitPath::Direct);
    fit.method = FitMethod::Goutis;
    return fit;
}

PenalizedFit fit_stein(const DesignMatrix& X, const Vector& y, double alpha)
{
    check_response(X, y);
    const ThinSvd svd = thin_svd(X.values());
    if (svd.rank < X.n()) throw RankDeficientError(RankSubject::X, svd.rank, X.n());
    // (X V, D) is the Stein pair expressed in row-space coordinates.
    const Matrix Xr = X.values() * svd.V;
    const Matrix Lr = svd.s.asDiagonal();
    const GsvdFactors f = compute_gsvd(DesignMatrix(Xr), PenaltyOperator(Lr, PenaltyKind::Stein));
    PenalizedFit reduced = fit_from_factors(f, DesignMatrix(Xr), y, alpha);
    PenalizedFit fit;
    fit.method = FitMethod::Stein;
    fit.alpha = alpha;
    fit.filters = reduced.filters;
    fit.components = svd.V * reduced.components;
    fit.null_terms = reduced.null_terms;
    fit.beta = svd.V * reduced.beta;
    return finish(std::move(fit), X);
}

bool is_singular_vector_prior(const DesignMatrix& X, const SubspacePrior& prior, double tol)
{
    const ThinSvd svd = thin_svd(X.values());
    const Index d = prior.d();
    if (d > svd.rank || prior.p() != X.p()) return false;
    // Ties at the cut make the dominant subspace ill-defined.
    if (d < svd.rank && svd.s(d - 1) - svd.s(d) <= tol * svd.s(0)) return false;
    const Matrix Vd = svd.V.leftCols(d);
    const Matrix diff = prior.projector - Vd * Vd.transpose();
    return diff.norm() <= tol * std::sqrt(static_cast<double>(d));
}

PenalizedFit fit_ab_family(const DesignMatrix& X, const SubspacePrior& prior, double a, double b, const Vector& y)
{
    check_response(X, y);
    if (is_singular_vector_prior(X, prior)) {
        const ThinSvd svd = thin_svd(X.values());
        const Index d = prior.d();
        Vector filters(svd.rank);
        for (Index k = 0; k < svd.rank; ++k) {
            const double s2 = svd.s(k) * svd.s(k);
            const double w = k < d ? b : a;
            filters(k) = s2 / (s2 + w * w);
        }
        PenalizedFit fit = svd_filter_fit(X, svd, y, filters, FitMethod::AbFamily);
        fit.alpha = 1.0;
        fit.a = a;
        fit.b = b;
        return fit;
    }
    const PenaltyOperator L = projection_penalty(prior, a, b);
    PenalizedFit fit;
    try {
        fit = fit_penalized(X, L, y, 1.0, FitPath::Gsvd);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::DimensionMismatch) throw;
        fit = fit_penalized(X, L, y, 1.0, FitPath::StandardForm);
    }
    fit.method = FitMethod::AbFamily;
    fit.a = a;
    fit.b = b;
    return fit;
}

StandardForm standard_form(const DesignMatrix& X, const PenaltyOperator& L, const Vector& y)
{
    check_response(X, y);
    WeightedInverse wi = weighted_inverse(X, L);
    StandardForm sf;
    sf.offset = wi.offset_map * y;
    sf.response = y - X.values() * sf.offset;
    sf.design = X.values() * wi.pinv;
    sf.back_transform = std::move(wi.pinv);
    return sf;
}

StandardFormSolver::StandardFormSolver(const DesignMatrix& X, const PenaltyOperator& L, const Vector& y)
{
    check_response(X, y);
    WeightedInverse wi = weighted_inverse(X, L);
    offset_ = wi.offset_map * y;
    const Vector yt = y - X.values() * offset_;
    const Matrix Xt = X.values() * wi.pinv;
    const ThinSvd svd = thin_svd(Xt);
    const Index r = svd.rank;
    sv_ = svd.s.head(r);
    vs_ = svd.V.leftCols(r);
    basis_ = wi.pinv * vs_;
    uty_ = svd.U.leftCols(r).transpose() * yt;
    ynorm2_ = yt.squaredNorm();
    residual_dim_ = X.n() - wi.null_dim;
}

Vector StandardFormSolver::transformed_beta(double alpha) const
{
    const Vector coef = sv_.cwiseProduct(uty_).cwiseQuotient((sv_.cwiseAbs2().array() + alpha).matrix());
    return vs_ * coef;
}

Vector StandardFormSolver::beta(double alpha) const
{
    const Vector coef = sv_.cwiseProduct(uty_).cwiseQuotient((sv_.cwiseAbs2().array() + alpha).matrix());
    return basis_ * coef + offset_;
}

}  // namespace peer
