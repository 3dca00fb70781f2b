#pragma once

#include "peer/gsvd.hpp"
#include "peer/penalties.hpp"
#include "peer/types.hpp"

#include <functional>
#include <optional>
#include <string_view>
#include <vector>

namespace peer {

enum class FitPath { Direct, Gsvd, StandardForm };

enum class FitMethod {
    Direct,
    Gsvd,
    StandardForm,
    Pcr,
    AbFamily,
    MinNorm,
    FilterFamily,
    Goutis,
    Stein,
    Ideal,
};

std::string_view to_string(FitPath path);
std::string_view to_string(FitMethod method);
FitPath parse_fit_path(std::string_view name);

struct PenalizedFit {
    Vector beta;
    double alpha = 0.0;
    std::optional<double> a;
    std::optional<double> b;
    FitMethod method = FitMethod::Direct;
    /// Per-component filter factors; ascending generalized (or ordinary)
    /// singular values on the gsvd path, descending ordinary singular values
    /// on the SVD-filter paths.
    Vector filters;
    /// Rank-one terms in expansion order, null(L) terms last. Gsvd path only.
    Matrix components;
    Index null_terms = 0;
    Vector fitted;
    bool jitter_applied = false;
};

PenalizedFit fit_penalized(const DesignMatrix& X, const PenaltyOperator& L, const Vector& y, double alpha,
                           FitPath path);

/// Same as the gsvd path but reusing precomputed factors.
PenalizedFit fit_from_factors(const GsvdFactors& f, const DesignMatrix& X, const Vector& y, double alpha);

enum class PartialSumOrder {
    Expansion,       ///< ascending sigma_k, null(L) terms last
    DominantFirst,   ///< null(L) terms first, then descending sigma_k
};

std::vector<Vector> partial_sums(const PenalizedFit& fit, const std::vector<Index>& ks,
                                 PartialSumOrder order = PartialSumOrder::Expansion);

PenalizedFit fit_pcr(const DesignMatrix& X, const Vector& y, Index d_components);
PenalizedFit fit_min_norm(const DesignMatrix& X, const Vector& y);

/// beta = V diag{(sigma_k / h^2) phi(sigma_k^2 / h^2)} U'y.
PenalizedFit fit_filter_family(const DesignMatrix& X, const Vector& y, const std::function<double(double)>& phi,
                               double h);

PenalizedFit fit_ideal_filter(const DesignMatrix& X, const Vector& y, const Vector& beta_true, double sigma_eps);

PenalizedFit fit_goutis(const DesignMatrix& X, const Vector& y, double alpha);

/// (X'X + alpha X'X)^{-1} X'y restricted to the row space of X.
PenalizedFit fit_stein(const DesignMatrix& X, const Vector& y, double alpha);

/// True when the prior spans the d dominant right singular vectors of X.
bool is_singular_vector_prior(const DesignMatrix& X, const SubspacePrior& prior, double tol = 1e-8);

PenalizedFit fit_ab_family(const DesignMatrix& X, const SubspacePrior& prior, double a, double b, const Vector& y);

/// Result of the standard-form change of variables.
struct StandardForm {
    Matrix design;    ///< n x m, X L_X^+
    Vector response;  ///< y - X offset
    Vector offset;    ///< null(L) component fitted by least squares
    Matrix back_transform;  ///< p x m, L_X^+
};

StandardForm standard_form(const DesignMatrix& X, const PenaltyOperator& L, const Vector& y);

/// Ridge solver on the standard-form problem: one SVD, then O(p r) per alpha.
class StandardFormSolver {
public:
    StandardFormSolver(const DesignMatrix& X, const PenaltyOperator& L, const Vector& y);

    Vector beta(double alpha) const;
    /// Coefficients of the transformed (ridge) problem.
    Vector transformed_beta(double alpha) const;

    const Vector& singular_values() const noexcept { return sv_; }
    /// U_s' y_transformed.
    const Vector& projected_response() const noexcept { return uty_; }
    double response_norm2() const noexcept { return ynorm2_; }
    /// Dimension of the space orthogonal to the unpenalized columns X N.
    Index residual_dim() const noexcept { return residual_dim_; }
    const Vector& offset() const noexcept { return offset_; }

private:
    Matrix basis_;  ///< p x r, L_X^+ V_s
    Matrix vs_;     ///< m x r
    Vector sv_;
    Vector uty_;
    Vector offset_;
    double ynorm2_ = 0;
    Index residual_dim_ = 0;
};

/// Ordinary thin SVD with a rank cut, ordered by descending singular value.
struct ThinSvd {
    Matrix U;
    Vector s;
    Matrix V;
    Index rank = 0;
};

ThinSvd thin_svd(const Matrix& X);

}  // namespace peer
