#include "peer/error.hpp"
#include "peer/estimators.hpp"
#include "peer/gsvd.hpp"
#include "peer/simharness.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace peer;
using test::Rng;
using test::rel_diff;

namespace {

/// Singular triples from an independent two-sided Jacobi SVD.
struct Triples {
    Matrix U;
    Vector s;
    Matrix V;
};

Triples jacobi(const Matrix& X)
{
    Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

Vector ridge_closed_form(const Matrix& X, const Vector& y, double alpha)
{
    const Index p = X.cols();
    return (X.transpose() * X + alpha * Matrix::Identity(p, p)).ldlt().solve(X.transpose() * y);
}

Vector truncated_svd_solution(const Matrix& X, const Vector& y, Index d)
{
    const Triples t = jacobi(X);
    Vector beta = Vector::Zero(X.cols());
    for (Index k = 0; k < d; ++k) beta += (t.U.col(k).dot(y) / t.s(k)) * t.V.col(k);
    return beta;
}

Matrix top_right_vectors(const Matrix& X, Index d) { return jacobi(X).V.leftCols(d); }

}  // namespace

TEST(FitPenalized, PathsAgreeForEveryPenaltyKind)
{
    Rng rng(101);
    const std::vector<std::pair<Index, Index>> shapes = {{8, 20}, {12, 18}, {10, 25}};
    for (int kind = 0; kind < test::kPenaltyKindCount; ++kind) {
        for (auto [n, p] : shapes) {
            const DesignMatrix X(rng.gaussian(n, p));
            const PenaltyOperator L = test::random_penalty(kind, n, p, rng);
            const Vector y = rng.gaussian(n);
            for (double alpha : {1e-3, 1.0, 1e3}) {
                SCOPED_TRACE(test::penalty_label(kind) + " n=" + std::to_string(n) + " p=" + std::to_string(p)
                             + " alpha=" + std::to_string(alpha));
                const Vector oracle = test::penalized_solve(X.values(), L.values(), y, alpha);
                const Vector direct = fit_penalized(X, L, y, alpha, FitPath::Direct).beta;
                const Vector gsvd = fit_penalized(X, L, y, alpha, FitPath::Gsvd).beta;
                const Vector sf = fit_penalized(X, L, y, alpha, FitPath::StandardForm).beta;
                EXPECT_LE(rel_diff(direct, gsvd), 1e-8);
                EXPECT_LE(rel_diff(direct, sf), 1e-8);
                EXPECT_LE(rel_diff(gsvd, sf), 1e-8);
                EXPECT_LE(rel_diff(oracle, gsvd), 1e-8);
            }
        }
    }
}

TEST(FitPenalized, FittedAndComponentsAreConsistent)
{
    Rng rng(102);
    for (int kind = 0; kind < test::kPenaltyKindCount; ++kind) {
        SCOPED_TRACE(test::penalty_label(kind));
        const DesignMatrix X(rng.gaussian(9, 21));
        const PenaltyOperator L = test::random_penalty(kind, 9, 21, rng);
        const Vector y = rng.gaussian(9);
        const PenalizedFit fit = fit_penalized(X, L, y, 0.7, FitPath::Gsvd);
        ASSERT_EQ(fit.components.cols(), 9);
        EXPECT_LE((fit.components.rowwise().sum() - fit.beta).norm(), 1e-10 * std::max(1.0, fit.beta.norm()));
        EXPECT_LE(rel_diff(fit.fitted, X.values() * fit.beta), 1e-12);
        EXPECT_EQ(fit.method, FitMethod::Gsvd);
    }
}

TEST(FitPenalized, IdentityPenaltyIsRidge)
{
    Rng rng(103);
    const Matrix X = rng.gaussian(15, 40);
    const Vector y = rng.gaussian(15);
    for (double alpha : {1e-2, 0.5, 20.0}) {
        const Vector oracle = ridge_closed_form(X, y, alpha);
        for (FitPath path : {FitPath::Direct, FitPath::Gsvd, FitPath::StandardForm})
            EXPECT_LE(rel_diff(fit_penalized(DesignMatrix(X), identity_penalty(40), y, alpha, path).beta, oracle),
                      1e-9)
                << to_string(path);
    }
}

TEST(FitPenalized, VanishingPenaltyInvertsSquareDesign)
{
    Rng rng(104);
    Matrix A = rng.gaussian(10, 10);
    A.diagonal().array() += 6.0;
    const Vector y = rng.gaussian(10);
    const Vector exact = A.fullPivLu().solve(y);
    const PenaltyOperator L = derivative_penalty(10, 2, 0.1);
    for (double alpha : {1e-12, 1e-9, 1e-6}) {
        for (FitPath path : {FitPath::Direct, FitPath::Gsvd, FitPath::StandardForm}) {
            const Vector beta = fit_penalized(DesignMatrix(A), L, y, alpha, path).beta;
            EXPECT_LE(rel_diff(beta, exact), 1e-4) << to_string(path) << " alpha=" << alpha;
        }
    }
}

TEST(FitPenalized, ShiftedSecondDifferenceTenByForty)
{
    Rng rng(105);
    const DesignMatrix X(rng.gaussian(10, 40));
    const PenaltyOperator L = derivative_penalty(40, 2, 0.1);
    const Vector y = rng.gaussian(10);
    const Matrix A = X.values().transpose() * X.values() + 2.0 * L.values().transpose() * L.values();
    const Vector oracle = A.ldlt().solve(X.values().transpose() * y);
    const Vector direct = fit_penalized(X, L, y, 2.0, FitPath::Direct).beta;
    const Vector gsvd = fit_penalized(X, L, y, 2.0, FitPath::Gsvd).beta;
    const Vector sf = fit_penalized(X, L, y, 2.0, FitPath::StandardForm).beta;
    EXPECT_LE(rel_diff(direct, gsvd), 1e-8);
    EXPECT_LE(rel_diff(direct, sf), 1e-8);
    EXPECT_LE(rel_diff(gsvd, sf), 1e-8);
    EXPECT_LE(rel_diff(oracle, direct), 1e-8);
}

TEST(FitPenalized, DataAugmentationEquivalence)
{
    Rng rng(106);
    for (int kind = 0; kind < test::kPenaltyKindCount; ++kind) {
        SCOPED_TRACE(test::penalty_label(kind));
        const Matrix X = rng.gaussian(7, 18);
        const PenaltyOperator L = test::random_penalty(kind, 7, 18, rng);
        const Vector y = rng.gaussian(7);
        const double alpha = 0.3;
        Matrix Z(X.rows() + L.m(), X.cols());
        Z << X, std::sqrt(alpha) * L.values();
        Vector rhs = Vector::Zero(Z.rows());
        rhs.head(7) = y;
        const Vector oracle = test::pinv(Z) * rhs;
        EXPECT_LE(rel_diff(fit_penalized(DesignMatrix(X), L, y, alpha, FitPath::Gsvd).beta, oracle), 1e-8);
    }
}

TEST(FitPenalized, MonotoneShrinkageForRidge)
{
    Rng rng(107);
    const DesignMatrix X(rng.gaussian(12, 30));
    const Vector y = rng.gaussian(12);
    double previous = std::numeric_limits<double>::infinity();
    for (double alpha : log_grid(-4, 5, 10)) {
        const double norm = fit_penalized(X, identity_penalty(30), y, alpha, FitPath::Gsvd).beta.norm();
        EXPECT_LE(norm, previous * (1 + 1e-12));
        previous = norm;
    }
}

TEST(FitPenalized, RejectsBadArguments)
{
    Rng rng(108);
    const DesignMatrix X(rng.gaussian(5, 9));
    const Vector y = rng.gaussian(5);
    EXPECT_THROW(fit_penalized(X, identity_penalty(9), y, -1.0, FitPath::Direct), Error);
    EXPECT_THROW(fit_penalized(X, identity_penalty(8), y, 1.0, FitPath::Direct), Error);
    EXPECT_THROW(fit_penalized(X, identity_penalty(9), rng.gaussian(4), 1.0, FitPath::Gsvd), Error);
    EXPECT_EQ(parse_fit_path("standard_form"), FitPath::StandardForm);
    EXPECT_THROW(parse_fit_path("qr"), Error);
}

TEST(FitPenalized, SingularDirectSystem)
{
    // Shared null direction e_1 of X and L.
    Matrix X = Matrix::Zero(3, 4);
    X(0, 1) = 1;
    X(1, 2) = 1;
    X(2, 3) = 1;
    Matrix L = Matrix::Zero(3, 4);
    L(0, 1) = 1;
    L(1, 2) = 1;
    L(2, 3) = 1;
    try {
        const PenalizedFit fit =
            fit_penalized(DesignMatrix(X), PenaltyOperator(L, PenaltyKind::Custom), Vector::Ones(3), 1.0, FitPath::Direct);
        // A jittered factorization is acceptable only when it is flagged.
        EXPECT_TRUE(fit.jitter_applied);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SingularSystem);
    }
}

TEST(PartialSums, FullSumAndSingleTerm)
{
    Rng rng(109);
    const Matrix Xm = rng.gaussian(8, 20);
    const DesignMatrix X(Xm);
    const Vector y = rng.gaussian(8);
    const double alpha = 0.4;
    const PenalizedFit fit = fit_penalized(X, identity_penalty(20), y, alpha, FitPath::Gsvd);
    const auto sums = partial_sums(fit, {0, 1, 8});
    EXPECT_EQ(sums[0].norm(), 0.0);
    EXPECT_LE((sums[2] - fit.beta).norm(), 1e-10 * fit.beta.norm());

    const Triples t = jacobi(Xm);
    const Index last = t.s.size() - 1;  // smallest ordinary singular value
    const double s = t.s(last);
    const Vector single = (s * s / (s * s + alpha)) * (t.U.col(last).dot(y) / s) * t.V.col(last);
    EXPECT_LE(rel_diff(sums[1], single), 1e-9);
}

TEST(PartialSums, NullTermsComeLast)
{
    Rng rng(110);
    const DesignMatrix X(rng.gaussian(6, 15));
    const PenaltyOperator L = derivative_penalty(15, 2);
    const Vector y = rng.gaussian(6);
    PenalizedFit fit = fit_penalized(X, L, y, 1.0, FitPath::Gsvd);
    ASSERT_EQ(fit.null_terms, 0);  // D^2 as built here has full rank
    const Matrix Lb = rng.gaussian(12, 15);
    fit = fit_penalized(X, PenaltyOperator(Lb, PenaltyKind::Custom), y, 1.0, FitPath::Gsvd);
    ASSERT_EQ(fit.null_terms, 3);
    const auto exp = partial_sums(fit, {3}, PartialSumOrder::Expansion);
    const auto dom = partial_sums(fit, {3}, PartialSumOrder::DominantFirst);
    EXPECT_LE((exp[0] - fit.components.leftCols(3).rowwise().sum()).norm(), 1e-14);
    EXPECT_LE((dom[0] - fit.components.rightCols(3).rowwise().sum()).norm(), 1e-14);
    // Null(L) terms do not depend on alpha.
    const PenalizedFit other = fit_penalized(X, PenaltyOperator(Lb, PenaltyKind::Custom), y, 50.0, FitPath::Gsvd);
    EXPECT_LE(rel_diff(other.components.rightCols(3), fit.components.rightCols(3)), 1e-10);
}

TEST(PartialSums, WrongPathAndRange)
{
    Rng rng(111);
    const DesignMatrix X(rng.gaussian(5, 10));
    const Vector y = rng.gaussian(5);
    for (FitPath path : {FitPath::Direct, FitPath::StandardForm}) {
        const PenalizedFit fit = fit_penalized(X, identity_penalty(10), y, 1.0, path);
        try {
            partial_sums(fit, {1});
            ADD_FAILURE() << "expected WrongPath";
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::WrongPath);
        }
    }
    const PenalizedFit fit = fit_penalized(X, identity_penalty(10), y, 1.0, FitPath::Gsvd);
    EXPECT_THROW(partial_sums(fit, {6}), Error);
    EXPECT_THROW(partial_sums(fit, {-1}), Error);
}

TEST(Pcr, FullRankEqualsMinNorm)
{
    Rng rng(112);
    const DesignMatrix X(rng.gaussian(7, 19));
    const Vector y = rng.gaussian(7);
    EXPECT_LE(rel_diff(fit_pcr(X, y, 7).beta, fit_min_norm(X, y).beta), 1e-12);
    EXPECT_LE(rel_diff(fit_min_norm(X, y).beta, test::pinv(X.values()) * y), 1e-10);
}

TEST(Pcr, DiagonalCoordinateProblem)
{
    Matrix X = Matrix::Zero(3, 3);
    X.diagonal() << 3, 2, 1;
    const Vector beta = fit_pcr(DesignMatrix(X), Vector{{3.0, 2.0, 1.0}}, 2).beta;
    EXPECT_NEAR(beta(0), 1.0, 1e-14);
    EXPECT_NEAR(beta(1), 1.0, 1e-14);
    EXPECT_NEAR(beta(2), 0.0, 1e-14);
}

TEST(Pcr, MatchesExplicitTruncation)
{
    Rng rng(113);
    const Matrix X = rng.gaussian(8, 30);
    const Vector y = rng.gaussian(8);
    const PenalizedFit fit = fit_pcr(DesignMatrix(X), y, 4);
    EXPECT_LE(rel_diff(fit.beta, truncated_svd_solution(X, y, 4)), 1e-10);
    EXPECT_EQ(fit.method, FitMethod::Pcr);
    EXPECT_EQ((fit.filters.array() == 1.0).count(), 4);
}

TEST(Pcr, TooManyComponents)
{
    Rng rng(114);
    Matrix X = rng.gaussian(6, 3) * rng.gaussian(3, 12);  // rank 3
    const Vector y = rng.gaussian(6);
    for (Index d : {Index{0}, Index{4}, Index{7}}) {
        try {
            fit_pcr(DesignMatrix(X), y, d);
            ADD_FAILURE() << "d=" << d;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::TooManyComponents);
        }
    }
    EXPECT_NO_THROW(fit_pcr(DesignMatrix(X), y, 3));
}

TEST(AbFamily, EqualWeightsGiveRidge)
{
    Rng rng(115);
    const Matrix X = rng.gaussian(10, 24);
    const Vector y = rng.gaussian(10);
    const Vector oracle = ridge_closed_form(X, y, 2.25);
    // Both the singular-vector shortcut and an arbitrary prior.
    const SubspacePrior top = orthonormal_projector(top_right_vectors(X, 3));
    const SubspacePrior other = orthonormal_projector(rng.gaussian(24, 3));
    EXPECT_LE(rel_diff(fit_ab_family(DesignMatrix(X), top, 1.5, 1.5, y).beta, oracle), 1e-8);
    EXPECT_LE(rel_diff(fit_ab_family(DesignMatrix(X), other, 1.5, 1.5, y).beta, oracle), 1e-8);
}

TEST(AbFamily, SingularVectorPriorMatchesPenalizedFit)
{
    Rng rng(116);
    const Matrix X = rng.gaussian(9, 20);
    const Vector y = rng.gaussian(9);
    for (Index d : {Index{1}, Index{3}, Index{5}}) {
        const SubspacePrior prior = orthonormal_projector(top_right_vectors(X, d));
        ASSERT_TRUE(is_singular_vector_prior(DesignMatrix(X), prior));
        for (auto [a, b] : std::vector<std::pair<double, double>>{{2.0, 0.5}, {0.3, 4.0}, {5.0, 0.0}}) {
            const Vector shortcut = fit_ab_family(DesignMatrix(X), prior, a, b, y).beta;
            const Matrix L = a * (Matrix::Identity(20, 20) - prior.projector) + b * prior.projector;
            const Vector oracle = test::penalized_solve(X, L, y, 1.0);
            EXPECT_LE(rel_diff(shortcut, oracle), 1e-8) << "d=" << d << " a=" << a << " b=" << b;
        }
    }
    EXPECT_FALSE(is_singular_vector_prior(DesignMatrix(X), orthonormal_projector(rng.gaussian(20, 2))));
}

TEST(AbFamily, PcrIsTheLargeALimit)
{
    Rng rng(117);
    const Matrix X = rng.gaussian(10, 30);
    const Vector y = rng.gaussian(10);
    for (Index d : {Index{2}, Index{4}}) {
        const SubspacePrior prior = orthonormal_projector(top_right_vectors(X, d));
        const Vector ab = fit_ab_family(DesignMatrix(X), prior, 1e8, 0.0, y).beta;
        EXPECT_LE(rel_diff(ab, fit_pcr(DesignMatrix(X), y, d).beta), 1e-4);
    }
}

TEST(AbFamily, PcrPlusRidgeBlocks)
{
    Rng rng(118);
    const Matrix X = rng.gaussian(10, 25);
    const Vector y = rng.gaussian(10);
    const Index d = 3;
    const double a = 1.7;
    const SubspacePrior prior = orthonormal_projector(top_right_vectors(X, d));
    const Matrix P = prior.projector;
    const Matrix Pperp = Matrix::Identity(25, 25) - P;
    const Vector ab = fit_ab_family(DesignMatrix(X), prior, a, 0.0, y).beta;
    // Q block: PCR on the top d triples. Q-perp block: ridge with alpha = a^2.
    EXPECT_LE(rel_diff(P * ab, truncated_svd_solution(X, y, d)), 1e-10);
    EXPECT_LE(rel_diff(Pperp * ab, Pperp * ridge_closed_form(X, y, a * a)), 1e-10);
}

TEST(AbFamily, BlockIndependence)
{
    Rng rng(119);
    const Matrix X = rng.gaussian(12, 28);
    const Vector y = rng.gaussian(12);
    const SubspacePrior prior = orthonormal_projector(top_right_vectors(X, 4));
    const Matrix P = prior.projector;
    const Matrix Pperp = Matrix::Identity(28, 28) - P;
    const Vector base = fit_ab_family(DesignMatrix(X), prior, 2.0, 0.7, y).beta;
    const Vector moved_b = fit_ab_family(DesignMatrix(X), prior, 2.0, 3.1, y).beta;
    const Vector moved_a = fit_ab_family(DesignMatrix(X), prior, 0.4, 0.7, y).beta;
    EXPECT_LE((Pperp * (base - moved_b)).norm(), 1e-10 * base.norm());
    EXPECT_LE((P * (base - moved_a)).norm(), 1e-10 * base.norm());
    EXPECT_GT((P * (base - moved_b)).norm(), 1e-6 * base.norm());
}

TEST(AbFamily, ArbitraryPriorUsesGeneralExpansion)
{
    Rng rng(120);
    const Matrix X = rng.gaussian(8, 20);
    const Vector y = rng.gaussian(8);
    const SubspacePrior prior = orthonormal_projector(rng.gaussian(20, 3));
    for (double b : {0.0, 0.6}) {
        const Matrix L = 2.0 * (Matrix::Identity(20, 20) - prior.projector) + b * prior.projector;
        const PenalizedFit fit = fit_ab_family(DesignMatrix(X), prior, 2.0, b, y);
        EXPECT_LE(rel_diff(fit.beta, test::penalized_solve(X, L, y, 1.0)), 1e-8);
        EXPECT_EQ(fit.method, FitMethod::AbFamily);
        EXPECT_DOUBLE_EQ(*fit.a, 2.0);
        EXPECT_DOUBLE_EQ(*fit.b, b);
    }
}

TEST(MinNorm, OrthonormalRows)
{
    Rng rng(121);
    const Matrix X = test::random_orthonormal(rng, 15, 5).transpose();
    const Vector y = rng.gaussian(5);
    EXPECT_LE(rel_diff(fit_min_norm(DesignMatrix(X), y).beta, X.transpose() * y), 1e-12);
}

TEST(MinNorm, SingleNonzeroEntry)
{
    // The single-row design [2 0 0] padded with a zero row.
    Matrix X = Matrix::Zero(2, 3);
    X(0, 0) = 2;
    const Vector beta = fit_min_norm(DesignMatrix(X), Vector{{4.0, 0.0}}).beta;
    EXPECT_NEAR(beta(0), 2.0, 1e-14);
    EXPECT_NEAR(beta(1), 0.0, 1e-14);
    EXPECT_NEAR(beta(2), 0.0, 1e-14);
}

TEST(MinNorm, SmallestAmongLeastSquaresSolutions)
{
    Rng rng(122);
    const Matrix X = rng.gaussian(6, 20);
    const Vector y = rng.gaussian(6);
    const Vector beta = fit_min_norm(DesignMatrix(X), y).beta;
    EXPECT_LE((X * beta - y).norm(), 1e-10 * y.norm());
    const Matrix N = Eigen::FullPivLU<Matrix>(X).kernel();
    ASSERT_EQ(N.cols(), 14);
    for (int trial = 0; trial < 100; ++trial) {
        const Vector b = beta + N * rng.gaussian(N.cols());
        EXPECT_LE((X * b - y).norm(), 1e-9 * y.norm());
        EXPECT_LE(beta.norm(), b.norm() * (1 + 1e-12));
    }
}

TEST(FilterFamily, RidgeFilter)
{
    Rng rng(123);
    const Matrix X = rng.gaussian(9, 22);
    const Vector y = rng.gaussian(9);
    const double alpha = 0.8;
    const Vector beta = fit_filter_family(DesignMatrix(X), y, [](double t) { return 1.0 / (1.0 + t); },
                                          std::sqrt(alpha)).beta;
    EXPECT_LE(rel_diff(beta, ridge_closed_form(X, y, alpha)), 1e-10);
}

TEST(FilterFamily, TruncationFilterIsPcr)
{
    Rng rng(124);
    const Matrix X = rng.gaussian(9, 22);
    const Vector y = rng.gaussian(9);
    const Vector s = jacobi(X).s;
    for (Index d : {Index{2}, Index{5}}) {
        const double h = std::sqrt(s(d - 1) * s(d));
        const Vector beta =
            fit_filter_family(DesignMatrix(X), y, [](double t) { return t > 1 ? 1.0 / t : 0.0; }, h).beta;
        EXPECT_LE(rel_diff(beta, truncated_svd_solution(X, y, d)), 1e-10);
    }
}

TEST(FilterFamily, ReciprocalFilterIsMinNorm)
{
    Rng rng(125);
    const DesignMatrix X(rng.gaussian(6, 14));
    const Vector y = rng.gaussian(6);
    for (double h : {1.0, 0.3})
        EXPECT_LE(rel_diff(fit_filter_family(X, y, [](double t) { return 1.0 / t; }, h).beta,
                           fit_min_norm(X, y).beta),
                  1e-12);
    EXPECT_THROW(fit_filter_family(X, y, [](double) { return 1.0; }, 0.0), Error);
    EXPECT_THROW(fit_filter_family(X, y, [](double) { return std::nan(""); }, 1.0), Error);
}

TEST(IdealFilter, NoiseFreeIsMinNorm)
{
    Rng rng(126);
    const DesignMatrix X(rng.gaussian(7, 16));
    const Vector beta_true = rng.gaussian(16);
    const Vector y = rng.gaussian(7);
    const PenalizedFit fit = fit_ideal_filter(X, y, beta_true, 0.0);
    EXPECT_TRUE((fit.filters.array() == 1.0).all());
    EXPECT_LE(rel_diff(fit.beta, fit_min_norm(X, y).beta), 1e-12);
}

TEST(IdealFilter, NoRecoverableSignal)
{
    Rng rng(127);
    const Matrix X = rng.gaussian(6, 15);
    const Matrix N = Eigen::FullPivLU<Matrix>(X).kernel();
    const Vector beta_true = N * rng.gaussian(N.cols());  // v_k' beta = 0 for every k
    const PenalizedFit fit = fit_ideal_filter(DesignMatrix(X), rng.gaussian(6), beta_true, 0.5);
    EXPECT_LE(fit.beta.norm(), 1e-12);
    EXPECT_LE(fit.filters.cwiseAbs().maxCoeff(), 1e-20);
}

TEST(IdealFilter, BeatsOptimalRidgeOnBumps)
{
    const ScenarioDraw draw = gen_bumps(30, 100, 77, 10.0);
    const Matrix& X = draw.X;
    const Vector& beta = draw.beta;
    const Vector clean = X * beta;
    const double sigma_eps = calibrate_noise(clean, 0.8);
    const Triples t = jacobi(X);
    const std::vector<double> alphas = log_grid(-6, 4, 41);

    Rng rng(128);
    double ideal_mse = 0;
    std::vector<double> ridge_mse(alphas.size(), 0.0);
    const int draws = 1000;
    for (int r = 0; r < draws; ++r) {
        const Vector y = clean + sigma_eps * rng.gaussian(30);
        ideal_mse += (fit_ideal_filter(DesignMatrix(X), y, beta, sigma_eps).beta - beta).squaredNorm();
        const Vector uty = t.U.transpose() * y;
        for (std::size_t j = 0; j < alphas.size(); ++j) {
            const Vector coef = t.s.cwiseProduct(uty).cwiseQuotient((t.s.cwiseAbs2().array() + alphas[j]).matrix());
            ridge_mse[j] += (t.V * coef - beta).squaredNorm();
        }
    }
    const double best_ridge = *std::min_element(ridge_mse.begin(), ridge_mse.end());
    EXPECT_LE(ideal_mse / draws, best_ridge / draws);
}

TEST(Goutis, MatchesDirectPenalizedFit)
{
    Rng rng(129);
    const DesignMatrix X(rng.gaussian(10, 30));
    const Vector y = rng.gaussian(10);
    for (double alpha : {1e-2, 1.0, 1e2}) {
        const PenalizedFit g = fit_goutis(X, y, alpha);
        EXPECT_EQ(g.method, FitMethod::Goutis);
        const Vector direct = fit_penalized(X, goutis_penalty(30), y, alpha, FitPath::Direct).beta;
        EXPECT_LE(rel_diff(g.beta, direct), 1e-10);
    }
}

TEST(Goutis, VanishingPenaltyInvertsSquareDesign)
{
    Rng rng(130);
    Matrix A = rng.gaussian(8, 8);
    A.diagonal().array() += 5.0;
    const Vector y = rng.gaussian(8);
    EXPECT_LE(rel_diff(fit_goutis(DesignMatrix(A), y, 1e-10).beta, A.fullPivLu().solve(y)), 1e-6);
}

TEST(Stein, ShrinksTheMinNormFit)
{
    Rng rng(131);
    const DesignMatrix X(rng.gaussian(8, 20));
    const Vector y = rng.gaussian(8);
    const Vector mn = fit_min_norm(X, y).beta;
    for (double alpha : {0.1, 1.0, 4.0}) {
        const PenalizedFit fit = fit_stein(X, y, alpha);
        EXPECT_LE(rel_diff(fit.beta, mn / (1 + alpha)), 1e-10);
        EXPECT_LE((fit.components.rowwise().sum() - fit.beta).norm(), 1e-10 * fit.beta.norm());
    }
}

TEST(StandardForm, IdentityPenalty)
{
    Rng rng(132);
    const DesignMatrix X(rng.gaussian(6, 14));
    const Vector y = rng.gaussian(6);
    const StandardForm sf = standard_form(X, identity_penalty(14), y);
    EXPECT_LE(rel_diff(sf.design, X.values()), 1e-12);
    EXPECT_LE(sf.offset.norm(), 1e-14);
    EXPECT_LE(rel_diff(sf.response, y), 1e-14);
}

TEST(StandardForm, InvertiblePenaltyBackTransformsByInverse)
{
    Rng rng(133);
    const Matrix X = rng.gaussian(7, 12);
    const Vector y = rng.gaussian(7);
    const PenaltyOperator L = derivative_penalty(12, 2, 0.3);
    const StandardForm sf = standard_form(DesignMatrix(X), L, y);
    const Matrix Linv = L.values().inverse();
    EXPECT_LE(sf.offset.norm(), 1e-14);
    EXPECT_LE(rel_diff(sf.back_transform, Linv), 1e-10);
    const double alpha = 0.9;
    const Vector ridge = ridge_closed_form(sf.design, sf.response, alpha);
    EXPECT_LE(rel_diff(Linv * ridge, test::penalized_solve(X, L.values(), y, alpha)), 1e-8);
}

TEST(StandardForm, ProjectionRoundTripAndSpectrum)
{
    Rng rng(134);
    const Matrix X = rng.gaussian(6, 12);
    const Vector y = rng.gaussian(6);
    const SubspacePrior prior = orthonormal_projector(rng.gaussian(12, 2));
    const PenaltyOperator L = projection_penalty(prior, 1.3, 0.0);
    const StandardForm sf = standard_form(DesignMatrix(X), L, y);
    for (double alpha : {1e-3, 0.5, 10.0}) {
        const Matrix Xt = sf.design;
        const Vector ridge =
            (Xt.transpose() * Xt + alpha * Matrix::Identity(Xt.cols(), Xt.cols())).ldlt().solve(Xt.transpose() * sf.response);
        const Vector beta = sf.back_transform * ridge + sf.offset;
        EXPECT_LE(rel_diff(beta, test::penalized_solve(X, L.values(), y, alpha)), 1e-8) << alpha;
    }
    // Nonzero singular values of X L_X^+ are the finite generalized values sigma / mu.
    const GsvdFactors f = compute_gsvd(DesignMatrix(X), L);
    std::vector<double> gamma(f.gamma.data(), f.gamma.data() + f.gamma.size());
    gamma.erase(std::remove_if(gamma.begin(), gamma.end(), [](double g) { return g == 0.0; }), gamma.end());
    std::sort(gamma.rbegin(), gamma.rend());
    const Vector s = jacobi(sf.design).s;
    ASSERT_GE(s.size(), static_cast<Index>(gamma.size()));
    for (std::size_t k = 0; k < gamma.size(); ++k) EXPECT_NEAR(s(k), gamma[k], 1e-10 * gamma[0]);
    for (Index k = gamma.size(); k < s.size(); ++k) EXPECT_LE(s(k), 1e-10 * gamma[0]);
}

TEST(StandardForm, SolverMatchesDirectAcrossAlpha)
{
    Rng rng(135);
    for (int kind = 0; kind < test::kPenaltyKindCount; ++kind) {
        SCOPED_TRACE(test::penalty_label(kind));
        const DesignMatrix X(rng.gaussian(8, 19));
        const PenaltyOperator L = test::random_penalty(kind, 8, 19, rng);
        const Vector y = rng.gaussian(8);
        const StandardFormSolver solver(X, L, y);
        for (double alpha : log_grid(-3, 3, 7))
            EXPECT_LE(rel_diff(solver.beta(alpha), test::penalized_solve(X.values(), L.values(), y, alpha)), 1e-8);
    }
}
