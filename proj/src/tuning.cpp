#include "peer/tuning.hpp"

#include "peer/error.hpp"
#include "peer/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace peer {

std::string_view to_string(TuningMethod method)
{
    return method == TuningMethod::Reml ? "reml" : "grid";
}

std::string_view to_string(GridCriterion criterion)
{
    return criterion == GridCriterion::MseOracle ? "mse_oracle" : "validation";
}

GridCriterion parse_grid_criterion(std::string_view name)
{
    if (name == "mse_oracle") return GridCriterion::MseOracle;
    if (name == "validation" || name == "gcv_free_validation") return GridCriterion::Validation;
    throw Error(ErrorKind::InvalidArgument, "unknown grid criterion '" + std::string(name) + "'");
}

namespace {

struct RemlProblem {
    Vector d2;
    Vector uty2;
    double rr = 0.0;
    double dof = 0.0;

    RemlProblem(const DesignMatrix& X, const PenaltyOperator& L, const Vector& y)
    {
        if (X.n() < 3) throw Error(ErrorKind::InvalidArgument, "REML needs n >= 3");
        const StandardFormSolver solver(X, L, y);
        d2 = solver.singular_values().cwiseAbs2();
        uty2 = solver.projected_response().cwiseAbs2();
        rr = std::max(0.0, solver.response_norm2() - uty2.sum());
        dof = static_cast<double>(solver.residual_dim() - (X.centered() ? 1 : 0));
        if (dof < 1) throw Error(ErrorKind::InvalidArgument, "no residual degrees of freedom for REML");
        const double scale = std::max(solver.response_norm2(), 0.0);
        if (!(scale > 0)) throw FlatLikelihoodError(0.0, true);
    }

    double sigma2(double lambda) const
    {
        double s = rr;
        for (Index i = 0; i < d2.size(); ++i) s += uty2(i) / (1.0 + d2(i) / lambda);
        return s / dof;
    }

    double loglik(double lambda) const
    {
        double logdet = 0.0;
        for (Index i = 0; i < d2.size(); ++i) logdet += std::log1p(d2(i) / lambda);
        return -0.5 * (dof * std::log(sigma2(lambda)) + logdet);
    }
};

}  // namespace

double reml_log_likelihood(const DesignMatrix& X, const PenaltyOperator& L, const Vector& y, double alpha)
{
    if (!(alpha > 0)) throw Error(ErrorKind::InvalidArgument, "alpha must be positive");
    return RemlProblem(X, L, y).loglik(alpha);
}

TuningResult reml_select_alpha(const DesignMatrix& X, const PenaltyOperator& L, const Vector& y,
                               const RemlOptions& options)
{
    if (!(options.log10_upper > options.log10_lower) || !(options.coarse_step > 0))
        throw Error(ErrorKind::InvalidArgument, "invalid REML bracket");
    const RemlProblem prob(X, L, y);

    TuningResult out;
    out.method = TuningMethod::Reml;
    const auto steps = static_cast<Index>(
        std::llround((options.log10_upper - options.log10_lower) / options.coarse_step));
    Index best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i <= steps; ++i) {
        const double t = options.log10_lower + (options.log10_upper - options.log10_lower)
                                                   * static_cast<double>(i) / static_cast<double>(steps);
        const double lambda = std::pow(10.0, t);
        const double value = prob.loglik(lambda);
        out.criterion_trace.push_back({lambda, 0.0, 0.0, value});
        if (value > best_value) {
            best_value = value;
            best = i;
        }
    }
    if (!std::isfinite(best_value)) throw FlatLikelihoodError(std::pow(10.0, options.log10_lower), true);
    if (best == 0) throw FlatLikelihoodError(out.criterion_trace.front().alpha, true);
    if (best == steps) throw FlatLikelihoodError(out.criterion_trace.back().alpha, false);

    auto f = [&](double t) { return prob.loglik(std::pow(10.0, t)); };
    double lo = std::log10(out.criterion_trace[static_cast<std::size_t>(best - 1)].alpha);
    double hi = std::log10(out.criterion_trace[static_cast<std::size_t>(best + 1)].alpha);
    const double tol = std::log10(1.0 + options.relative_tol);
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - ratio * (hi - lo);
    double x2 = lo + ratio * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    while (hi - lo > tol) {
        if (f1 >= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    double t_hat = 0.5 * (lo + hi);
    double v_hat = f(t_hat);
    const double t_grid = std::log10(out.criterion_trace[static_cast<std::size_t>(best)].alpha);
    if (best_value > v_hat) {
        t_hat = t_grid;
        v_hat = best_value;
    }
    out.alpha_hat = std::pow(10.0, t_hat);
    const double s2 = prob.sigma2(out.alpha_hat);
    out.sigma_eps_hat = std::sqrt(s2);
    out.sigma_b_hat = std::sqrt(s2 / out.alpha_hat);
    out.criterion_trace.push_back({out.alpha_hat, 0.0, 0.0, v_hat});
    return out;
}

namespace {

struct Split {
    DesignMatrix train;
    Vector y_train;
    Matrix X_test;
    Vector y_test;
};

Split holdout_split(const DesignMatrix& X, const Vector& y, Index stride)
{
    if (stride < 2) throw Error(ErrorKind::InvalidArgument, "holdout stride must be at least 2");
    std::vector<Index> train;
    std::vector<Index> test;
    for (Index i = 0; i < X.n(); ++i) (i % stride == stride - 1 ? test : train).push_back(i);
    if (test.empty() || train.size() < 2) throw Error(ErrorKind::InvalidArgument, "too few rows for a holdout split");
    const Matrix& A = X.values();
    Matrix Xtr(static_cast<Index>(train.size()), X.p());
    Vector ytr(Xtr.rows());
    for (std::size_t i = 0; i < train.size(); ++i) {
        Xtr.row(static_cast<Index>(i)) = A.row(train[i]);
        ytr(static_cast<Index>(i)) = y(train[i]);
    }
    Matrix Xte(static_cast<Index>(test.size()), X.p());
    Vector yte(Xte.rows());
    for (std::size_t i = 0; i < test.size(); ++i) {
        Xte.row(static_cast<Index>(i)) = A.row(test[i]);
        yte(static_cast<Index>(i)) = y(test[i]);
    }
    return Split{DesignMatrix(std::move(Xtr)), std::move(ytr), std::move(Xte), std::move(yte)};
}

}  // namespace

TuningResult grid_search(const DesignMatrix& X, const SubspacePrior& prior, const Vector& y,
                         const std::vector<double>& a_grid, const GridOptions& options)
{
    if (a_grid.empty()) throw Error(ErrorKind::EmptyGrid, "a_grid is empty");
    if (options.alphas.empty()) throw Error(ErrorKind::EmptyGrid, "alpha list is empty");
    for (double a : a_grid)
        if (!(a > 0) || !std::isfinite(a)) throw Error(ErrorKind::InvalidArgument, "a_grid values must be positive");
    for (double alpha : options.alphas)
        if (!(alpha > 0) || !std::isfinite(alpha)) throw Error(ErrorKind::InvalidArgument, "alphas must be positive");
    if (!(options.product_const >= 0)) throw Error(ErrorKind::InvalidArgument, "product constant must be >= 0");
    if (y.size() != X.n()) throw Error(ErrorKind::DimensionMismatch, "response length differs from n");
    if (options.criterion == GridCriterion::MseOracle) {
        if (!options.beta_true) throw Error(ErrorKind::InvalidArgument, "mse_oracle needs beta_true");
        if (options.beta_true->size() != X.p()) throw Error(ErrorKind::DimensionMismatch, "beta_true must have length p");
    }

    std::vector<double> as = a_grid;
    std::sort(as.begin(), as.end());
    std::vector<double> alphas = options.alphas;
    std::sort(alphas.begin(), alphas.end());

    std::optional<Split> split;
    if (options.criterion == GridCriterion::Validation) split = holdout_split(X, y, options.holdout_stride);
    const DesignMatrix& Xfit = split ? split->train : X;
    const Vector& yfit = split ? split->y_train : y;

    TuningResult out;
    out.method = TuningMethod::Grid;
    double best = std::numeric_limits<double>::infinity();
    for (double a : as) {
        const double b = options.product_const / a;
        const StandardFormSolver solver(Xfit, projection_penalty(prior, a, b), yfit);
        for (double alpha : alphas) {
            const Vector beta = solver.beta(alpha);
            const double value = split ? (split->y_test - split->X_test * beta).squaredNorm()
                                             / static_cast<double>(split->y_test.size())
                                       : (beta - *options.beta_true).squaredNorm();
            out.criterion_trace.push_back({alpha, a, b, value});
            if (value < best) {
                best = value;
                out.alpha_hat = alpha;
                out.a_hat = a;
                out.b_hat = b;
            }
        }
    }
    if (!std::isfinite(best)) throw Error(ErrorKind::SingularSystem, "grid criterion is not finite anywhere");
    return out;
}

}  // namespace peer
