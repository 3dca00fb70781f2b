#include "peer/diagnostics.hpp"

#include "peer/error.hpp"
#include "peer/estimators.hpp"
#include "peer/linalg.hpp"

#include <cmath>
#include <limits>

namespace peer {

namespace {

void check_beta(const GsvdFactors& f, const Vector& beta)
{
    if (beta.size() != f.p) throw Error(ErrorKind::DimensionMismatch, "beta_true must have length p");
}

void check_sigma(double sigma_eps)
{
    if (!(sigma_eps >= 0) || !std::isfinite(sigma_eps))
        throw Error(ErrorKind::InvalidArgument, "sigma_eps must be a nonnegative finite scalar");
}

// Per-column shrinkage alpha mu^2 / (sigma^2 + alpha mu^2); zero when alpha = 0.
Vector shrinkage(const GsvdFactors& f, double alpha)
{
    const Vector s = f.sigma_full();
    const Vector m = f.mu_full();
    Vector g = Vector::Zero(f.p);
    if (alpha == 0.0) return g;
    for (Index k = 0; k < f.p; ++k) {
        const double am2 = alpha * m(k) * m(k);
        if (am2 > 0) g(k) = am2 / (s(k) * s(k) + am2);
    }
    return g;
}

// sigma / (sigma^2 + alpha mu^2) per column of W; the X^# weights.
Vector pinv_weights(const GsvdFactors& f, double alpha)
{
    const Vector s = f.sigma_full();
    const Vector m = f.mu_full();
    Vector c = Vector::Zero(f.p);
    for (Index k = f.p - f.n; k < f.p; ++k) {
        const double den = s(k) * s(k) + alpha * m(k) * m(k);
        if (den > 0 && s(k) > f.sigma_tol) c(k) = s(k) / den;
    }
    return c;
}

double spectral_norm(const Matrix& A)
{
    if (A.size() == 0) return 0.0;
    return checked_svd(A).s(0);
}

}  // namespace

Vector compute_bias(const GsvdFactors& f, double alpha, const Vector& beta_true)
{
    check_beta(f, beta_true);
    const Vector coef = shrinkage(f, alpha).cwiseProduct(f.Wtilde.transpose() * beta_true);
    return f.W * coef;
}

VarianceResult compute_variance(const GsvdFactors& f, double alpha, double sigma_eps)
{
    check_sigma(sigma_eps);
    const Vector c = pinv_weights(f, alpha);
    const Matrix B = f.W * c.asDiagonal();
    const double s2 = sigma_eps * sigma_eps;
    VarianceResult out;
    out.diagonal = s2 * B.rowwise().squaredNorm();
    out.trace = out.diagonal.sum();
    if (f.p <= kFullVarianceLimit) out.full = s2 * (B * B.transpose());
    return out;
}

MseResult compute_mse(const GsvdFactors& f, double alpha, const Vector& beta_true, double sigma_eps)
{
    check_beta(f, beta_true);
    check_sigma(sigma_eps);
    const Vector coef = shrinkage(f, alpha).cwiseProduct(f.Wtilde.transpose() * beta_true);
    const Vector wnorm = f.W.colwise().norm().transpose();
    const Vector c = pinv_weights(f, alpha);

    MseResult out;
    out.bias_norm2 = (f.W * coef).squaredNorm();
    out.variance_trace = sigma_eps * sigma_eps * c.cwiseProduct(wnorm).squaredNorm();
    out.mse = out.bias_norm2 + out.variance_trace;
    const double l1 = coef.cwiseAbs().dot(wnorm);
    out.bound = l1 * l1 + out.variance_trace;
    return out;
}

Matrix resolution_matrix(const GsvdFactors& f, double alpha)
{
    const Vector s = f.sigma_full();
    Vector keep = Vector::Ones(f.p) - shrinkage(f, alpha);
    // Without shrinkage the null(X) columns are still annihilated by X.
    for (Index k = 0; k < f.p; ++k)
        if (s(k) <= f.sigma_tol) keep(k) = 0.0;
    return f.W * keep.asDiagonal() * f.Wtilde.transpose();
}

FitDiagnostics diagnose(const GsvdFactors& f, double alpha, const Vector& beta_true, double sigma_eps)
{
    FitDiagnostics out;
    out.sigma_eps = sigma_eps;
    out.bias = compute_bias(f, alpha, beta_true);
    VarianceResult var = compute_variance(f, alpha, sigma_eps);
    out.variance = std::move(var.full);
    out.variance_diagonal = std::move(var.diagonal);
    out.trace_variance = var.trace;
    const MseResult mse = compute_mse(f, alpha, beta_true, sigma_eps);
    out.mse_theoretical = mse.mse;
    out.mse_bound = mse.bound;
    if (f.p <= kFullVarianceLimit) out.resolution = resolution_matrix(f, alpha);

    const Vector s = f.sigma_full();
    const Vector m = f.mu_full();
    const Vector g = shrinkage(f, alpha);
    const Vector c = pinv_weights(f, alpha);
    const Vector wtb = f.Wtilde.transpose() * beta_true;
    out.components.reserve(static_cast<std::size_t>(f.p));
    for (Index k = 0; k < f.p; ++k) {
        ComponentDiagnostics cd;
        cd.sigma = s(k);
        cd.mu = m(k);
        const double den = s(k) * s(k) + alpha * m(k) * m(k);
        cd.filter = den > 0 ? s(k) * s(k) / den : 0.0;
        cd.bias_coefficient = g(k) * wtb(k);
        cd.variance = sigma_eps * sigma_eps * c(k) * c(k) * f.W.col(k).squaredNorm();
        out.components.push_back(cd);
    }
    return out;
}

AbMseBreakdown mse_ab_closed_form(const DesignMatrix& X, const SubspacePrior& prior, double a, double b,
                                  const Vector& beta_true, double sigma_eps)
{
    check_sigma(sigma_eps);
    if (beta_true.size() != X.p()) throw Error(ErrorKind::DimensionMismatch, "beta_true must have length p");
    if (!is_singular_vector_prior(X, prior))
        throw Error(ErrorKind::WrongPrior, "prior is not spanned by dominant right singular vectors of X");
    const ThinSvd svd = thin_svd(X.values());
    const Index d = prior.d();
    const Vector vb = svd.V.leftCols(svd.rank).transpose() * beta_true;
    const double s2e = sigma_eps * sigma_eps;

    AbMseBreakdown out;
    for (Index k = 0; k < svd.rank; ++k) {
        const double s2 = svd.s(k) * svd.s(k);
        const double w2 = k < d ? b * b : a * a;
        const double var = s2e * s2 / ((s2 + w2) * (s2 + w2));
        const double shrink = w2 / (s2 + w2);
        const double bias = shrink * shrink * vb(k) * vb(k);
        if (k < d) {
            out.prior_variance += var;
            out.prior_bias += bias;
        } else {
            out.off_prior_variance += var;
            out.off_prior_bias += bias;
        }
    }
    out.out_of_row_space = (beta_true - svd.V.leftCols(svd.rank) * vb).squaredNorm();
    out.total = out.off_prior_variance + out.off_prior_bias + out.prior_variance + out.prior_bias
              + out.out_of_row_space;
    return out;
}

PcrCondition pcr_sufficient_condition(const DesignMatrix& X, Index d, double b, const Vector& beta_true,
                                      double sigma_eps)
{
    check_sigma(sigma_eps);
    if (!(b > 0)) throw Error(ErrorKind::InvalidArgument, "b must be positive");
    const ThinSvd svd = thin_svd(X.values());
    if (d < 1 || d > svd.rank) throw Error(ErrorKind::TooManyComponents, "d exceeds the rank of X");
    PcrCondition out;
    double inv = 0.0;
    for (Index k = 0; k < d; ++k) inv += 1.0 / (svd.s(k) * svd.s(k));
    out.lhs = sigma_eps * sigma_eps * (inv + 2.0 * static_cast<double>(d) / (b * b));
    out.rhs = (svd.V.leftCols(d).transpose() * beta_true).squaredNorm();
    out.holds = out.lhs > out.rhs;
    return out;
}

double svd_filter_mse(const DesignMatrix& X, const Vector& filters, const Vector& beta_true, double sigma_eps)
{
    check_sigma(sigma_eps);
    const ThinSvd svd = thin_svd(X.values());
    if (filters.size() > svd.rank) throw Error(ErrorKind::DimensionMismatch, "more filters than singular values");
    const Index r = filters.size();
    const Vector vb = svd.V.leftCols(r).transpose() * beta_true;
    double mse = (beta_true - svd.V.leftCols(r) * vb).squaredNorm();
    const double s2e = sigma_eps * sigma_eps;
    for (Index k = 0; k < r; ++k) {
        const double fk = filters(k);
        mse += (1 - fk) * (1 - fk) * vb(k) * vb(k) + s2e * fk * fk / (svd.s(k) * svd.s(k));
    }
    return mse;
}

PerturbationResult perturbation_bound(const DesignMatrix& X, const PenaltyOperator& L, double alpha,
                                      const Vector& y, const Matrix& E1, const Matrix& E2)
{
    const Index n = X.n();
    const Index p = X.p();
    const Index m = L.m();
    if (L.p() != p) throw Error(ErrorKind::DimensionMismatch, "X and L have different column counts");
    if (y.size() != n) throw Error(ErrorKind::DimensionMismatch, "response length differs from n");
    if (E1.rows() != n || E1.cols() != p || E2.rows() != m || E2.cols() != p)
        throw Error(ErrorKind::DimensionMismatch, "perturbation blocks must match X and L");
    if (!(alpha > 0)) throw Error(ErrorKind::InvalidArgument, "alpha must be positive");

    Matrix Z(n + m, p);
    Z << X.values(), std::sqrt(alpha) * L.values();
    Matrix E(n + m, p);
    E << E1, E2;
    Vector yy = Vector::Zero(n + m);
    yy.head(n) = y;

    const Svd svd = checked_svd(Z);
    const Vector& sv = svd.s;
    const double smin = sv(sv.size() - 1);
    const double tol = static_cast<double>(std::max(n + m, p)) * std::numeric_limits<double>::epsilon() * sv(0);
    if (sv.size() < p || !(smin > tol)) throw RankDeficientError(RankSubject::Stacked, sv.size(), p);
    const double zpinv = 1.0 / smin;
    const double enorm = spectral_norm(E);

    PerturbationResult out;
    out.norm_product = zpinv * enorm;
    if (!(out.norm_product < 1.0))
        throw Error(ErrorKind::PerturbationTooLarge, "||Z^+|| ||E|| = " + std::to_string(out.norm_product) + " >= 1");

    const Vector beta = svd.V * (svd.U.transpose() * yy).cwiseQuotient(sv);
    const Vector r = yy - Z * beta;
    out.bound = out.norm_product / (1.0 - out.norm_product) * (beta.norm() + zpinv * r.norm());
    if (enorm > 0) {
        const Matrix ZE = Z + E;
        const Svd svdE = checked_svd(ZE);
        const Index rE = numerical_rank(svdE.s, tol);
        const Vector betaE = svdE.V.leftCols(rE)
                             * (svdE.U.leftCols(rE).transpose() * yy).cwiseQuotient(svdE.s.head(rE));
        out.observed_change = (beta - betaE).norm();
    }
    return out;
}

}  // namespace peer
