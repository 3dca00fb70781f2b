#pragma once

#include "peer/penalties.hpp"
#include "peer/rng.hpp"
#include "peer/types.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace peer {

enum class Scenario { Bumps, Cosine, Mixtures };

std::string_view to_string(Scenario scenario);
Scenario parse_scenario(std::string_view name);

inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

/// Bump centers c_j = 0.004 (8 j - 1).
double bump_center(int j);
/// exp(-spread (t - center)^2) on the grid.
Vector gaussian_bump(const GridSpec& grid, double center, double spread);

inline const std::vector<int> kBumpsPredictorSet = {2, 6, 10, 14, 20, 26, 30};
inline const std::vector<int> kBumpsBetaSet = {6, 14, 26};
inline const std::vector<double> kBumpsBetaAmplitudes = {3.0, 5.0, 2.0};
inline constexpr double kBumpSpread = 10000.0;

/// sqrt(2) cos(j pi t) for j >= 2 and the constant 1 for j = 1.
Vector cosine_basis(const GridSpec& grid, int j);
double cosine_gamma(int j);

Vector bumps_beta(const GridSpec& grid);
Vector cosine_beta(const GridSpec& grid);

/// S_X = sqrt(mean_i ||x_i - mean(x_i)||^2 / (p - 1)).
double signal_scale(const Matrix& curves);

/// One draw of a scenario.
struct ScenarioDraw {
    Matrix X_clean;
    Matrix X;          ///< observed curves, X_clean plus measurement error
    Vector beta;
    Vector y_clean;    ///< <x_i, beta> with the observed x_i
    Vector y;          ///< y_clean plus response error (empty when not requested)
    double sigma_e = 0.0;
    double sigma_eps = 0.0;
};

struct BumpsOptions {
    double a_low = 0.0;
    double a_high = 1.0;
};

/// Bumps predictors; measurement error calibrated so S_X / sigma_e = snr_target.
ScenarioDraw gen_bumps(Index n, Index p, std::uint64_t seed, double snr_target, const BumpsOptions& options = {});

/// Cosine predictors with N(0, sigma_x^2) measurement error and responses
/// calibrated to r2_target.
ScenarioDraw gen_cosine(Index n, Index p, std::uint64_t seed, double r2_target, double sigma_x);

/// Ten seeded synthetic spectra, each a unit-norm sum of 5 to 8 Gaussian bumps.
Matrix synthetic_templates(Index p, std::uint64_t seed, Index count = 10);

struct MixtureOptions {
    Index construction_n = 50;
    Index target_template = 8;            ///< zero-based; the 9th template
    double response_scale = 3.0;
    double construction_snr = 100.0;      ///< measurement error on the construction set
};

/// beta from the construction set: ridge fit of y0 = 3 c_9 on X0 at the REML alpha,
/// or at the lower bracket end when the likelihood peaks there.
Vector mixtures_beta(const Matrix& templates, std::uint64_t seed, const MixtureOptions& options = {});

/// Study set from fresh mixture weights; responses calibrated to r2_target.
ScenarioDraw gen_mixtures(Index n, std::uint64_t seed, const Matrix& templates, double r2_target,
                          const MixtureOptions& options = {});

/// sigma_eps = S_Y sqrt((1 - R^2) / R^2).
double calibrate_noise(const Vector& clean_y, double r2_target);

/// Raw spans of the simulation priors.
Matrix prior_basis_bumps(const GridSpec& grid, const std::vector<int>& centers);
Matrix prior_basis_cosine(const GridSpec& grid, int first, int last);
inline const std::vector<int> kPriorV = {2, 6, 10, 14, 20, 26, 30};
std::vector<int> prior_u_set();  ///< 2, 4, ..., 30

/// "L_V", "L_U", "L_F", "L_G" or "templates".
SubspacePrior named_prior(std::string_view name, const GridSpec& grid, const Matrix* templates = nullptr);

enum class MethodKind { Ridge, Pcr, D2, D2Shift, Projection, Goutis, Stein, MinNorm, Ideal };

std::string_view to_string(MethodKind kind);
MethodKind parse_method_kind(std::string_view name);

enum class TuningRule { Oracle, Reml };

struct MethodConfig {
    std::string name;
    MethodKind kind = MethodKind::Ridge;
    std::string prior;            ///< Projection only
    std::vector<double> a_grid;   ///< D2Shift and Projection
    double product_const = 1.0;   ///< Projection: b = c / a
    TuningRule tuning = TuningRule::Oracle;
};

struct SimulationSpec {
    Scenario scenario = Scenario::Bumps;
    Index n = 50;
    Index p = 250;
    std::vector<double> r2_targets = {0.8};
    std::vector<double> snr_targets = {10.0};
    Index replicates = 100;
    std::uint64_t master_seed = 1;
    std::vector<MethodConfig> methods;
    std::vector<double> alpha_grid;   ///< oracle search grid, ascending
    BumpsOptions bumps;
    std::uint64_t template_seed = 20110101;
    MixtureOptions mixtures;
    std::vector<std::string> partial_sum_methods;
    std::vector<Index> partial_sum_ks;
};

/// log-spaced alphas 10^lo ... 10^hi.
std::vector<double> log_grid(double log10_lo, double log10_hi, Index count);

SimulationSpec default_spec(Scenario scenario);

struct MethodOutcome {
    double mse = std::numeric_limits<double>::quiet_NaN();
    double pe = std::numeric_limits<double>::quiet_NaN();
    double alpha = std::numeric_limits<double>::quiet_NaN();
    double a = std::numeric_limits<double>::quiet_NaN();
    double b = std::numeric_limits<double>::quiet_NaN();
    Index components = 0;
    std::string error;
};

struct PartialSumRecord {
    std::string method;
    Index k = 0;
    double error_norm = 0.0;
};

struct ReplicateResult {
    Index setting = 0;
    Index replicate = 0;
    std::vector<MethodOutcome> outcomes;   ///< one per configured method
    std::vector<PartialSumRecord> partial_sums;
    double realized_r2 = 0.0;
    double realized_snr = 0.0;
};

struct SettingSummary {
    double r2 = 0.0;
    double snr = 0.0;
    std::string method;
    Index count = 0;
    Index failures = 0;
    double median_mse = 0.0;
    double mean_mse = 0.0;
    double median_pe = 0.0;
    double mean_pe = 0.0;
};

struct StudyResult {
    SimulationSpec spec;
    std::vector<std::pair<double, double>> settings;  ///< (r2, snr)
    std::vector<ReplicateResult> replicates;          ///< settings-major, replicate-minor
    std::vector<SettingSummary> summary;               ///< settings-major, methods-minor
    std::vector<std::string> error_log;
    Vector beta;
    Vector grid;

    const SettingSummary& find(double r2, double snr, std::string_view method) const;
};

/// Worker count from PEER_THREADS, defaulting to hardware concurrency.
unsigned default_worker_count();

StudyResult run_study(const SimulationSpec& spec, unsigned workers = 0);

/// results.csv, summary.csv, partial_sums.csv, errors.log under `dir`.
void write_study(const StudyResult& result, const std::filesystem::path& dir);

/// %.17g, with "nan" and "inf" spelled out.
std::string format_double(double value);

}  // namespace peer
