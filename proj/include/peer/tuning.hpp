#pragma once

#include "peer/penalties.hpp"
#include "peer/types.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace peer {

enum class TuningMethod { Reml, Grid };
enum class GridCriterion { MseOracle, Validation };

std::string_view to_string(TuningMethod method);
std::string_view to_string(GridCriterion criterion);
GridCriterion parse_grid_criterion(std::string_view name);

struct TracePoint {
    double alpha = 0.0;
    double a = 0.0;  ///< zero on the reml trace
    double b = 0.0;
    double value = 0.0;  ///< restricted log-likelihood, or the grid criterion
};

struct TuningResult {
    double alpha_hat = 0.0;
    double sigma_eps_hat = 0.0;  ///< standard deviations; reml only
    double sigma_b_hat = 0.0;
    std::optional<double> a_hat;
    std::optional<double> b_hat;
    std::vector<TracePoint> criterion_trace;
    TuningMethod method = TuningMethod::Reml;
};

struct RemlOptions {
    double log10_lower = -12.0;
    double log10_upper = 12.0;
    double coarse_step = 0.25;      ///< log10 spacing of the initial scan
    double relative_tol = 1e-6;     ///< on the selected alpha
};

/// Restricted maximum likelihood for alpha = sigma_eps^2 / sigma_b^2 in the
/// mixed model y = X L^+ b + X N c + e, b ~ N(0, sigma_b^2 I).
/// A centered design loses one further degree of freedom to the intercept.
TuningResult reml_select_alpha(const DesignMatrix& X, const PenaltyOperator& L, const Vector& y,
                               const RemlOptions& options = {});

/// Restricted log-likelihood at one alpha, profiled over sigma_eps^2.
double reml_log_likelihood(const DesignMatrix& X, const PenaltyOperator& L, const Vector& y, double alpha);

struct GridOptions {
    double product_const = 1.0;    ///< b = c / a
    std::vector<double> alphas = {1.0};
    GridCriterion criterion = GridCriterion::MseOracle;
    std::optional<Vector> beta_true;  ///< required by MseOracle
    Index holdout_stride = 4;         ///< every stride-th row is held out for Validation
};

/// Minimizes the criterion over a in a_grid (b = c / a) and the alpha list.
/// Ties go to the smaller a, then the smaller alpha.
TuningResult grid_search(const DesignMatrix& X, const SubspacePrior& prior, const Vector& y,
                         const std::vector<double>& a_grid, const GridOptions& options = {});

}  // namespace peer
