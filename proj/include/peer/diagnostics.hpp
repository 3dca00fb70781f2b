#pragma once

#include "peer/gsvd.hpp"
#include "peer/penalties.hpp"
#include "peer/types.hpp"

#include <vector>

namespace peer {

/// Above this size only the variance diagonal and trace are formed.
inline constexpr Index kFullVarianceLimit = 2000;

struct VarianceResult {
    Matrix full;      ///< p x p, empty when p > kFullVarianceLimit
    Vector diagonal;  ///< length p
    double trace = 0.0;
};

struct MseResult {
    double mse = 0.0;
    double bound = 0.0;
    double bias_norm2 = 0.0;
    double variance_trace = 0.0;
};

/// One GSVD component's share of the error budget.
struct ComponentDiagnostics {
    double sigma = 0.0;
    double mu = 0.0;
    double filter = 0.0;
    double bias_coefficient = 0.0;  ///< shrinkage times w~_k' beta
    double variance = 0.0;          ///< sigma_eps^2 c_k^2 ||w_k||^2
};

struct FitDiagnostics {
    Vector bias;
    Matrix variance;  ///< empty when p > kFullVarianceLimit
    Vector variance_diagonal;
    double trace_variance = 0.0;
    double mse_theoretical = 0.0;
    double mse_bound = 0.0;
    Matrix resolution;  ///< X^# X, empty when p > kFullVarianceLimit
    double sigma_eps = 0.0;
    std::vector<ComponentDiagnostics> components;  ///< over all p columns of W
};

/// (I - X^# X) beta over every column of W with mu_k != 0, null(X) included.
Vector compute_bias(const GsvdFactors& f, double alpha, const Vector& beta_true);

VarianceResult compute_variance(const GsvdFactors& f, double alpha, double sigma_eps);

MseResult compute_mse(const GsvdFactors& f, double alpha, const Vector& beta_true, double sigma_eps);

/// X^# X = W diag(f) W~'.
Matrix resolution_matrix(const GsvdFactors& f, double alpha);

FitDiagnostics diagnose(const GsvdFactors& f, double alpha, const Vector& beta_true, double sigma_eps);

/// MSE of the (a, b) family for a prior spanned by the d dominant right
/// singular vectors of X.
struct AbMseBreakdown {
    double off_prior_variance = 0.0;
    double off_prior_bias = 0.0;
    double prior_variance = 0.0;
    double prior_bias = 0.0;
    double out_of_row_space = 0.0;  ///< ||(I - V V') beta||^2, always unestimated
    double total = 0.0;
};

AbMseBreakdown mse_ab_closed_form(const DesignMatrix& X, const SubspacePrior& prior, double a, double b,
                                  const Vector& beta_true, double sigma_eps);

/// Sufficient condition for PCR(d) to be beaten by the (infinity, b) estimate.
struct PcrCondition {
    double lhs = 0.0;  ///< sigma_eps^2 (sum_{top d} 1/sigma_k^2 + 2d/b^2)
    double rhs = 0.0;  ///< ||V_d' beta||^2
    bool holds = false;
};

PcrCondition pcr_sufficient_condition(const DesignMatrix& X, Index d, double b, const Vector& beta_true,
                                      double sigma_eps);

/// Expected squared error of V diag(f / s) U'y for filters over the leading
/// singular triples of X.
double svd_filter_mse(const DesignMatrix& X, const Vector& filters, const Vector& beta_true, double sigma_eps);

struct PerturbationResult {
    double bound = 0.0;
    double observed_change = 0.0;
    double norm_product = 0.0;  ///< ||Z^+|| ||E||
};

/// Stability of beta = Z^+ [y; 0] with Z = [X; sqrt(alpha) L] under Z -> Z + [E1; E2].
PerturbationResult perturbation_bound(const DesignMatrix& X, const PenaltyOperator& L, double alpha,
                                      const Vector& y, const Matrix& E1, const Matrix& E2);

}  // namespace peer
