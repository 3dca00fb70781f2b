#include "peer/diagnostics.hpp"
#include "peer/error.hpp"
#include "peer/estimators.hpp"
#include "peer/gsvd.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace peer;
using test::Rng;
using test::rel_diff;

namespace {

Matrix top_right_vectors(const Matrix& X, Index d)
{
    Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinV);
    return svd.matrixV().leftCols(d);
}

/// E||beta~ - beta||^2 from the dense hat map: ||(I - X#X) beta||^2 + s^2 ||X#||_F^2.
double dense_mse(const Matrix& X, const Matrix& L, double alpha, const Vector& beta, double sigma_eps)
{
    const Index p = X.cols();
    const Matrix Xs = test::sharp_inverse(X, L, alpha);
    return ((Matrix::Identity(p, p) - Xs * X) * beta).squaredNorm() + sigma_eps * sigma_eps * Xs.squaredNorm();
}

/// MSE of the (a, b) family, computed through the general GSVD path.
double general_ab_mse(const Matrix& X, const SubspacePrior& prior, double a, double b, const Vector& beta,
                      double sigma_eps)
{
    const GsvdFactors f = compute_gsvd(DesignMatrix(X), projection_penalty(prior, a, b));
    return compute_mse(f, 1.0, beta, sigma_eps).mse;
}

}  // namespace

TEST(Bias, MatchesDenseResolution)
{
    Rng rng(201);
    for (int kind = 0; kind < test::kPenaltyKindCount; ++kind) {
        SCOPED_TRACE(test::penalty_label(kind));
        const Matrix X = rng.gaussian(8, 19);
        const PenaltyOperator L = test::random_penalty(kind, 8, 19, rng);
        const Vector beta = rng.gaussian(19);
        const GsvdFactors f = compute_gsvd(DesignMatrix(X), L);
        for (double alpha : {1e-2, 1.0, 30.0}) {
            const Matrix R = test::resolution(X, L.values(), alpha);
            const Vector oracle = beta - R * beta;
            EXPECT_LE((compute_bias(f, alpha, beta) - oracle).norm(), 1e-9 * std::max(1.0, beta.norm()));
            EXPECT_LE(rel_diff(resolution_matrix(f, alpha), R), 1e-9);
        }
    }
}

TEST(Bias, VanishesForUnpenalizedDirections)
{
    Rng rng(202);
    const Matrix X = rng.gaussian(7, 16);
    // L annihilates a 3-dimensional subspace; beta inside it is unbiased.
    const Matrix Lm = rng.gaussian(13, 16);
    const Matrix N = Eigen::FullPivLU<Matrix>(Lm).kernel();
    const Vector beta = N * rng.gaussian(N.cols());
    const GsvdFactors f = compute_gsvd(DesignMatrix(X), PenaltyOperator(Lm, PenaltyKind::Custom));
    for (double alpha : {0.1, 10.0, 1e4}) EXPECT_LE(compute_bias(f, alpha, beta).norm(), 1e-10 * beta.norm());
}

TEST(Bias, ZeroWithoutPenaltyWeight)
{
    Rng rng(203);
    const GsvdFactors f = compute_gsvd(DesignMatrix(rng.gaussian(6, 13)), derivative_penalty(13, 1));
    EXPECT_EQ(compute_bias(f, 0.0, rng.gaussian(13)).norm(), 0.0);
}

TEST(Bias, ConfinedToPenalizedColumns)
{
    Rng rng(204);
    for (int kind = 0; kind < test::kPenaltyKindCount; ++kind) {
        SCOPED_TRACE(test::penalty_label(kind));
        const PenaltyOperator L = test::random_penalty(kind, 9, 22, rng);
        const GsvdFactors f = compute_gsvd(DesignMatrix(rng.gaussian(9, 22)), L);
        const Vector bias = compute_bias(f, 0.8, rng.gaussian(22));
        if (f.d > 0) {
            EXPECT_LE((f.Wtilde.rightCols(f.d).transpose() * bias).norm(), 1e-10 * std::max(1.0, bias.norm()));
        }
    }
}

TEST(Bias, InvertibleNormalMatrixShortcut)
{
    Rng rng(205);
    const Matrix X = rng.gaussian(12, 12);
    const Vector beta = rng.gaussian(12);
    const Vector y = X * beta;
    const GsvdFactors f = compute_gsvd(DesignMatrix(X), derivative_penalty(12, 2, 0.2));
    ASSERT_EQ(f.d, 0);
    const double alpha = 0.6;
    Vector expected = Vector::Zero(12);
    for (Index k = 0; k < f.n; ++k) {
        const double s2 = f.sigma(k) * f.sigma(k);
        const double am2 = alpha * f.mu(k) * f.mu(k);
        expected += (am2 / (s2 + am2)) * (f.U.col(k).dot(y) / f.sigma(k)) * f.W.col(f.p - f.n + k);
    }
    EXPECT_LE((compute_bias(f, alpha, beta) - expected).norm(), 1e-9 * beta.norm());
}

TEST(Variance, MatchesDenseCovariance)
{
    Rng rng(206);
    for (int kind = 0; kind < test::kPenaltyKindCount; ++kind) {
        SCOPED_TRACE(test::penalty_label(kind));
        const Matrix X = rng.gaussian(8, 20);
        const PenaltyOperator L = test::random_penalty(kind, 8, 20, rng);
        const GsvdFactors f = compute_gsvd(DesignMatrix(X), L);
        const double alpha = 0.5, sigma = 0.7;
        const Matrix Xs = test::sharp_inverse(X, L.values(), alpha);
        const Matrix oracle = sigma * sigma * Xs * Xs.transpose();
        const VarianceResult v = compute_variance(f, alpha, sigma);
        EXPECT_LE(rel_diff(v.full, oracle), 1e-9);
        EXPECT_LE(rel_diff(v.diagonal, oracle.diagonal()), 1e-9);
        EXPECT_NEAR(v.trace, oracle.trace(), 1e-9 * oracle.trace());
    }
}

TEST(Variance, OrthonormalRowsWithoutPenalty)
{
    Rng rng(207);
    const Matrix Q = test::random_orthonormal(rng, 14, 5);
    const GsvdFactors f = compute_gsvd(DesignMatrix(Matrix(Q.transpose())), identity_penalty(14));
    const VarianceResult v = compute_variance(f, 0.0, 1.5);
    EXPECT_LE(rel_diff(v.full, 2.25 * Q * Q.transpose()), 1e-10);
}

TEST(Variance, VanishesUnderTotalShrinkage)
{
    Rng rng(208);
    const Matrix X = rng.gaussian(6, 15);
    const GsvdFactors f = compute_gsvd(DesignMatrix(X), derivative_penalty(15, 2, 0.1));
    ASSERT_EQ(f.d, 0);
    const double at_one = compute_variance(f, 1.0, 1.0).full.norm();
    EXPECT_LE(compute_variance(f, 1e12, 1.0).full.norm(), 1e-10 * at_one);
}

TEST(Variance, MatchesMonteCarloDiagonal)
{
    Rng rng(209);
    const Matrix X = rng.gaussian(8, 15);
    const PenaltyOperator L = derivative_penalty(15, 2, 0.05);
    const double alpha = 0.3, sigma = 0.8;
    const GsvdFactors f = compute_gsvd(DesignMatrix(X), L);
    const Vector diag = compute_variance(f, alpha, sigma).diagonal;
    const Matrix Xs = test::sharp_inverse(X, L.values(), alpha);
    const int draws = 10000;
    Matrix samples(15, draws);
    for (int r = 0; r < draws; ++r) samples.col(r) = Xs * (sigma * rng.gaussian(8));
    const Vector mean = samples.rowwise().mean();
    for (Index i = 0; i < 15; ++i) {
        const Eigen::ArrayXd dev2 = (samples.row(i).array() - mean(i)).square();
        const double var = dev2.sum() / (draws - 1);
        const double se = std::sqrt(((dev2 - var).square()).sum() / (draws - 1) / draws);
        EXPECT_LE(std::abs(var - diag(i)), 3 * se) << "entry " << i;
    }
}

TEST(Mse, DecompositionAndBound)
{
    Rng rng(210);
    for (int kind = 0; kind < test::kPenaltyKindCount; ++kind) {
        SCOPED_TRACE(test::penalty_label(kind));
        const Matrix X = rng.gaussian(9, 21);
        const PenaltyOperator L = test::random_penalty(kind, 9, 21, rng);
        const GsvdFactors f = compute_gsvd(DesignMatrix(X), L);
        const Vector beta = rng.gaussian(21);
        for (double alpha : {1e-3, 1.0, 1e3}) {
            const FitDiagnostics dg = diagnose(f, alpha, beta, 0.6);
            const double parts = dg.bias.squaredNorm() + dg.variance.trace();
            EXPECT_NEAR(dg.mse_theoretical, parts, 1e-10 * parts);
            EXPECT_LE(dg.mse_theoretical, dg.mse_bound * (1 + 1e-12));
            EXPECT_NEAR(dg.mse_theoretical, dense_mse(X, L.values(), alpha, beta, 0.6), 1e-8 * parts);
            double from_components = 0;
            for (const auto& c : dg.components) from_components += c.variance;
            EXPECT_NEAR(from_components, dg.trace_variance, 1e-10 * dg.trace_variance);
        }
    }
}

TEST(Mse, SquareOrthogonalDesignWithoutPenalty)
{
    Rng rng(211);
    const Matrix Q = test::random_orthonormal(rng, 10, 10);
    const GsvdFactors f = compute_gsvd(DesignMatrix(Q), identity_penalty(10));
    const MseResult r = compute_mse(f, 0.0, rng.gaussian(10), 0.4);
    EXPECT_NEAR(r.mse, 10 * 0.16, 1e-12);
    EXPECT_NEAR(r.bias_norm2, 0.0, 1e-24);
}

TEST(Mse, MatchesMonteCarlo)
{
    Rng rng(212);
    const Matrix X = rng.gaussian(10, 18);
    const PenaltyOperator L = derivative_penalty(18, 1);
    const Vector beta = rng.gaussian(18);
    const double alpha = 0.4, sigma = 0.5;
    const double mse = compute_mse(compute_gsvd(DesignMatrix(X), L), alpha, beta, sigma).mse;
    const Matrix Xs = test::sharp_inverse(X, L.values(), alpha);
    const Vector clean = X * beta;
    double total = 0;
    const int draws = 10000;
    for (int r = 0; r < draws; ++r) total += (Xs * (clean + sigma * rng.gaussian(10)) - beta).squaredNorm();
    EXPECT_NEAR(total / draws, mse, 0.02 * mse);
}

TEST(AbClosedForm, MatchesGeneralPath)
{
    Rng rng(213);
    const Matrix X = rng.gaussian(9, 24);
    for (Index d : {Index{2}, Index{4}}) {
        const SubspacePrior prior = orthonormal_projector(top_right_vectors(X, d));
        const Vector beta = rng.gaussian(24);
        for (auto [a, b] : std::vector<std::pair<double, double>>{{1.0, 0.5}, {3.0, 0.0}, {0.2, 2.0}}) {
            const AbMseBreakdown m = mse_ab_closed_form(DesignMatrix(X), prior, a, b, beta, 0.7);
            const double parts =
                m.off_prior_variance + m.off_prior_bias + m.prior_variance + m.prior_bias + m.out_of_row_space;
            EXPECT_NEAR(m.total, parts, 1e-12 * parts);
            const double general = general_ab_mse(X, prior, a, b, beta, 0.7);
            EXPECT_NEAR(m.total, general, 1e-8 * general) << "a=" << a << " b=" << b;
        }
    }
}

TEST(AbClosedForm, RejectsArbitraryPrior)
{
    Rng rng(214);
    const Matrix X = rng.gaussian(7, 16);
    try {
        mse_ab_closed_form(DesignMatrix(X), orthonormal_projector(rng.gaussian(16, 2)), 1, 1, rng.gaussian(16), 1);
        ADD_FAILURE() << "expected WrongPrior";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::WrongPrior);
    }
}

TEST(AbClosedForm, LargerOffPriorWeightBeatsRidgeForBetaInPrior)
{
    Rng rng(215);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix X = rng.gaussian(10, 30);
        const Index d = 1 + trial % 4;
        const Matrix Vd = top_right_vectors(X, d);
        const SubspacePrior prior = orthonormal_projector(Vd);
        const Vector beta = Vd * rng.gaussian(d);
        const double alpha = std::pow(10.0, rng.uniform(-2, 1));
        const double ra = std::sqrt(alpha);
        const double ridge = mse_ab_closed_form(DesignMatrix(X), prior, ra, ra, beta, 0.5).total;
        const double shifted = mse_ab_closed_form(DesignMatrix(X), prior, 10 * ra, ra, beta, 0.5).total;
        EXPECT_LT(shifted, ridge) << "trial " << trial;
        // Same ordering through an independent dense evaluation.
        const Matrix I = Matrix::Identity(30, 30);
        const Matrix Lr = ra * I;
        const Matrix Ls = 10 * ra * (I - prior.projector) + ra * prior.projector;
        EXPECT_LT(dense_mse(X, Ls, 1.0, beta, 0.5), dense_mse(X, Lr, 1.0, beta, 0.5));
    }
}

TEST(PcrCondition, PcrErrorIsPureVariancePlusOffPriorSignal)
{
    Rng rng(216);
    const Matrix X = rng.gaussian(8, 20);
    const Index d = 3;
    const SubspacePrior prior = orthonormal_projector(top_right_vectors(X, d));
    const Vector beta = rng.gaussian(20);
    const double sigma = 0.4;
    Vector filters = Vector::Zero(8);
    filters.head(d).setOnes();
    const double pcr_mse = svd_filter_mse(DesignMatrix(X), filters, beta, sigma);
    const AbMseBreakdown limit = mse_ab_closed_form(DesignMatrix(X), prior, 1e8, 0.0, beta, sigma);
    EXPECT_NEAR(limit.total, pcr_mse, 1e-8 * pcr_mse);
    Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Matrix Vd = svd.matrixV().leftCols(d);
    const Matrix hat = Vd * svd.singularValues().head(d).cwiseInverse().asDiagonal() * svd.matrixU().leftCols(d).transpose();
    const double dense = (beta - hat * X * beta).squaredNorm() + sigma * sigma * hat.squaredNorm();
    EXPECT_NEAR(pcr_mse, dense, 1e-10 * dense);
}

TEST(PcrCondition, ReportsBothSides)
{
    Rng rng(217);
    const Matrix X = rng.gaussian(8, 20);
    Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinV);
    const Vector s = svd.singularValues();
    const Vector beta = svd.matrixV().leftCols(2) * Vector{{0.3, -0.2}};
    const PcrCondition c = pcr_sufficient_condition(DesignMatrix(X), 2, 0.5, beta, 0.9);
    const double lhs = 0.81 * (1 / (s(0) * s(0)) + 1 / (s(1) * s(1)) + 4 / 0.25);
    EXPECT_NEAR(c.lhs, lhs, 1e-12 * lhs);
    EXPECT_NEAR(c.rhs, 0.13, 1e-12);
    EXPECT_EQ(c.holds, lhs > 0.13);
    EXPECT_THROW(pcr_sufficient_condition(DesignMatrix(X), 9, 1.0, beta, 1.0), Error);
    EXPECT_THROW(pcr_sufficient_condition(DesignMatrix(X), 2, 0.0, beta, 1.0), Error);
}

TEST(PcrCondition, ConditionAloneDoesNotGuaranteeImprovement)
{
    // Singular values 10 and 0.1, b = 1, sigma_eps = 1, all signal on the weak
    // direction: lhs = 104.01 > rhs = 103, yet PCR has the smaller error.
    Matrix X = Matrix::Zero(2, 3);
    X(0, 0) = 10;
    X(1, 1) = 0.1;
    Vector beta = Vector::Zero(3);
    beta(1) = std::sqrt(103.0);
    const DesignMatrix Xd(X);
    const PcrCondition c = pcr_sufficient_condition(Xd, 2, 1.0, beta, 1.0);
    EXPECT_TRUE(c.holds);
    EXPECT_NEAR(c.lhs, 104.01, 1e-9);
    const SubspacePrior prior = orthonormal_projector(Matrix::Identity(3, 2));
    const double pcr = mse_ab_closed_form(Xd, prior, 1e8, 0.0, beta, 1.0).total;
    const double ab = mse_ab_closed_form(Xd, prior, 1e8, 1.0, beta, 1.0).total;
    EXPECT_NEAR(pcr, 100.01, 1e-6);
    EXPECT_GT(ab, pcr);
}

TEST(PcrCondition, ComponentwiseConditionImpliesImprovement)
{
    // The per-component inequality between variance reduction and added bias
    // is the exact criterion; check it against the closed form on random cases.
    Rng rng(218);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const Matrix X = rng.gaussian(8, 20);
        const Index d = 1 + trial % 3;
        Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinV);
        const Vector s = svd.singularValues();
        const Matrix Vd = svd.matrixV().leftCols(d);
        const Vector c = rng.gaussian(d) * rng.uniform(0.1, 3.0);
        const Vector beta = Vd * c;
        const double b = rng.uniform(0.1, 3.0), sigma = rng.uniform(0.1, 2.0);
        double lhs = 0, rhs = 0;
        for (Index k = 0; k < d; ++k) {
            const double s2 = s(k) * s(k);
            lhs += sigma * sigma / s2;
            rhs += sigma * sigma * s2 / ((s2 + b * b) * (s2 + b * b))
                   + std::pow(b * b / (s2 + b * b), 2) * c(k) * c(k);
        }
        if (lhs <= rhs) continue;
        ++checked;
        const SubspacePrior prior = orthonormal_projector(Vd);
        const double pcr = mse_ab_closed_form(DesignMatrix(X), prior, 1e8, 0.0, beta, sigma).total;
        const double ab = mse_ab_closed_form(DesignMatrix(X), prior, 1e8, b, beta, sigma).total;
        EXPECT_GT(pcr, ab);
    }
    EXPECT_GT(checked, 20);
}

TEST(Perturbation, ZeroPerturbation)
{
    Rng rng(219);
    const DesignMatrix X(rng.gaussian(8, 14));
    const PenaltyOperator L = derivative_penalty(14, 2, 0.1);
    const PerturbationResult r =
        perturbation_bound(X, L, 0.5, rng.gaussian(8), Matrix::Zero(8, 14), Matrix::Zero(14, 14));
    EXPECT_EQ(r.bound, 0.0);
    EXPECT_LE(r.observed_change, 1e-14);
}

TEST(Perturbation, SmallPerturbationIsBounded)
{
    Rng rng(220);
    const Matrix Xm = rng.gaussian(8, 14);
    const DesignMatrix X(Xm);
    const PenaltyOperator L = derivative_penalty(14, 2, 0.5);
    const Vector y = rng.gaussian(8);
    const double alpha = 1.0;
    const Matrix E1 = 1e-8 * rng.gaussian(8, 14);
    const Matrix E2 = 1e-8 * rng.gaussian(14, 14);
    const PerturbationResult r = perturbation_bound(X, L, alpha, y, E1, E2);
    const Vector beta = test::penalized_solve(Xm, L.values(), y, alpha);

    // Independent refit on the perturbed augmented system.
    Matrix Z(22, 14);
    Z << Xm + E1, std::sqrt(alpha) * L.values() + E2;
    Vector rhs = Vector::Zero(22);
    rhs.head(8) = y;
    const Vector perturbed = test::pinv(Z) * rhs;
    EXPECT_NEAR(r.observed_change, (perturbed - beta).norm(), 1e-9 * beta.norm());
    EXPECT_LE(r.observed_change, r.bound);
    EXPECT_LE(r.bound, 1e-5 * beta.norm());
    EXPECT_LT(r.norm_product, 1.0);
}

TEST(Perturbation, ChangeShrinksWithScale)
{
    Rng rng(221);
    const DesignMatrix X(rng.gaussian(7, 12));
    const PenaltyOperator L = derivative_penalty(12, 1);
    const Vector y = rng.gaussian(7);
    const Matrix E1 = rng.gaussian(7, 12), E2 = rng.gaussian(12, 12);
    double previous = std::numeric_limits<double>::infinity();
    for (int k = 4; k <= 10; ++k) {
        const double scale = std::pow(10.0, -k);
        const PerturbationResult r = perturbation_bound(X, L, 0.7, y, scale * E1, scale * E2);
        EXPECT_LT(r.observed_change, previous) << "k=" << k;
        EXPECT_LE(r.observed_change, r.bound);
        previous = r.observed_change;
    }
}

TEST(Perturbation, TooLarge)
{
    Rng rng(222);
    const DesignMatrix X(rng.gaussian(6, 10));
    const PenaltyOperator L = identity_penalty(10);
    try {
        perturbation_bound(X, L, 1.0, rng.gaussian(6), 100 * rng.gaussian(6, 10), 100 * rng.gaussian(10, 10));
        ADD_FAILURE() << "expected PerturbationTooLarge";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::PerturbationTooLarge);
    }
}
