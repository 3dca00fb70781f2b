#include "peer/simharness.hpp"

#include "peer/error.hpp"
#include "peer/estimators.hpp"
#include "peer/gsvd.hpp"
#include "peer/linalg.hpp"
#include "peer/tuning.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <thread>

namespace peer {

std::string_view to_string(Scenario scenario)
{
    switch (scenario) {
    case Scenario::Bumps: return "bumps";
    case Scenario::Cosine: return "cosine";
    case Scenario::Mixtures: return "mixtures";
    }
    return "bumps";
}

Scenario parse_scenario(std::string_view name)
{
    if (name == "bumps") return Scenario::Bumps;
    if (name == "cosine") return Scenario::Cosine;
    if (name == "mixtures") return Scenario::Mixtures;
    throw Error(ErrorKind::ConfigError, "unknown scenario '" + std::string(name) + "'");
}

std::string_view to_string(MethodKind kind)
{
    switch (kind) {
    case MethodKind::Ridge: return "ridge";
    case MethodKind::Pcr: return "pcr";
    case MethodKind::D2: return "d2";
    case MethodKind::D2Shift: return "d2_shift";
    case MethodKind::Projection: return "projection";
    case MethodKind::Goutis: return "goutis";
    case MethodKind::Stein: return "stein";
    case MethodKind::MinNorm: return "min_norm";
    case MethodKind::Ideal: return "ideal";
    }
    return "ridge";
}

MethodKind parse_method_kind(std::string_view name)
{
    for (MethodKind k : {MethodKind::Ridge, MethodKind::Pcr, MethodKind::D2, MethodKind::D2Shift,
                         MethodKind::Projection, MethodKind::Goutis, MethodKind::Stein, MethodKind::MinNorm,
                         MethodKind::Ideal})
        if (name == to_string(k)) return k;
    throw Error(ErrorKind::ConfigError, "unknown method kind '" + std::string(name) + "'");
}

double bump_center(int j)
{
    return 0.004 * (8.0 * j - 1.0);
}

Vector gaussian_bump(const GridSpec& grid, double center, double spread)
{
    return (-spread * (grid.t.array() - center).square()).exp().matrix();
}

Vector cosine_basis(const GridSpec& grid, int j)
{
    if (j < 1) throw Error(ErrorKind::InvalidArgument, "cosine basis index starts at 1");
    if (j == 1) return Vector::Ones(grid.p());
    return (std::sqrt(2.0) * (static_cast<double>(j) * std::numbers::pi * grid.t.array()).cos()).matrix();
}

double cosine_gamma(int j)
{
    const double sign = (j % 2 == 1) ? 1.0 : -1.0;
    return sign * std::pow(static_cast<double>(j), -0.75);
}

Vector bumps_beta(const GridSpec& grid)
{
    Vector beta = Vector::Zero(grid.p());
    for (std::size_t i = 0; i < kBumpsBetaSet.size(); ++i)
        beta += kBumpsBetaAmplitudes[i] * gaussian_bump(grid, bump_center(kBumpsBetaSet[i]), kBumpSpread);
    return beta;
}

Vector cosine_beta(const GridSpec& grid)
{
    return 0.75 * cosine_basis(grid, 5) + 1.5 * cosine_basis(grid, 11) + cosine_basis(grid, 17);
}

double signal_scale(const Matrix& curves)
{
    if (curves.cols() < 2 || curves.rows() < 1) throw Error(ErrorKind::InvalidArgument, "need curves with p >= 2");
    double total = 0.0;
    for (Index i = 0; i < curves.rows(); ++i) {
        const double mean = curves.row(i).mean();
        total += (curves.row(i).array() - mean).square().sum() / static_cast<double>(curves.cols() - 1);
    }
    return std::sqrt(total / static_cast<double>(curves.rows()));
}

double calibrate_noise(const Vector& clean_y, double r2_target)
{
    if (!(r2_target > 0.0 && r2_target <= 1.0))
        throw Error(ErrorKind::InvalidArgument, "r2_target must lie in (0, 1]");
    if (clean_y.size() < 2) throw Error(ErrorKind::ConstantResponse, "need at least two responses");
    const double mean = clean_y.mean();
    const double var = (clean_y.array() - mean).square().sum() / static_cast<double>(clean_y.size() - 1);
    const double scale = clean_y.cwiseAbs().maxCoeff();
    if (!(var > 0.0) || std::sqrt(var) <= 1e-14 * scale)
        throw Error(ErrorKind::ConstantResponse, "true responses are constant");
    return std::sqrt(var) * std::sqrt((1.0 - r2_target) / r2_target);
}

namespace {

enum Stream : std::uint64_t {
    kTrainCurves = 0,
    kTrainCurveNoise = 1,
    kTrainResponseNoise = 2,
    kTestCurves = 3,
    kTestCurveNoise = 4,
    kTestResponseNoise = 5,
    kMixtureConstruction = 6,
    kMixtureConstructionNoise = 7,
};

Matrix bumps_curves(Index n, const GridSpec& grid, Philox& rng, const BumpsOptions& opt)
{
    std::vector<Vector> bumps;
    for (int j : kBumpsPredictorSet) bumps.push_back(gaussian_bump(grid, bump_center(j), kBumpSpread));
    Matrix X = Matrix::Zero(n, grid.p());
    for (Index i = 0; i < n; ++i)
        for (const Vector& bump : bumps) X.row(i) += rng.uniform(opt.a_low, opt.a_high) * bump.transpose();
    return X;
}

Matrix cosine_curves(Index n, const GridSpec& grid, Philox& rng)
{
    Matrix phi(grid.p(), 40);
    for (int j = 1; j <= 40; ++j) phi.col(j - 1) = cosine_gamma(j) * cosine_basis(grid, j);
    Matrix Z(n, 40);
    const double h = std::sqrt(3.0);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < 40; ++j) Z(i, j) = rng.uniform(-h, h);
    return Z * phi.transpose();
}

Matrix mixture_curves(Index n, const Matrix& templates, Philox& rng, Matrix* weights = nullptr)
{
    Matrix C(n, templates.cols());
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < C.cols(); ++k) C(i, k) = rng.uniform();
    if (weights) *weights = C;
    return C * templates.transpose();
}

Matrix with_noise(const Matrix& clean, double sigma, Philox& rng)
{
    Matrix X = clean;
    if (sigma > 0)
        for (Index i = 0; i < X.rows(); ++i)
            for (Index j = 0; j < X.cols(); ++j) X(i, j) += sigma * rng.normal();
    return X;
}

Vector normals(Index n, double sigma, Philox& rng)
{
    Vector e(n);
    for (Index i = 0; i < n; ++i) e(i) = sigma * rng.normal();
    return e;
}

double measurement_sigma(const Matrix& clean, double snr)
{
    if (std::isinf(snr)) return 0.0;
    if (!(snr > 0)) throw Error(ErrorKind::InvalidArgument, "snr_target must be positive");
    return signal_scale(clean) / snr;
}

}  // namespace

ScenarioDraw gen_bumps(Index n, Index p, std::uint64_t seed, double snr_target, const BumpsOptions& options)
{
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "n must be >= 2");
    const GridSpec grid = GridSpec::equally_spaced(p);
    Philox curves(derive_key(seed, 0, kTrainCurves));
    Philox noise(derive_key(seed, 0, kTrainCurveNoise));
    ScenarioDraw d;
    d.X_clean = bumps_curves(n, grid, curves, options);
    d.sigma_e = measurement_sigma(d.X_clean, snr_target);
    d.X = with_noise(d.X_clean, d.sigma_e, noise);
    d.beta = bumps_beta(grid);
    d.y_clean = d.X * d.beta;
    return d;
}

ScenarioDraw gen_cosine(Index n, Index p, std::uint64_t seed, double r2_target, double sigma_x)
{
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "n must be >= 2");
    if (!(sigma_x >= 0)) throw Error(ErrorKind::InvalidArgument, "sigma_x must be nonnegative");
    const GridSpec grid = GridSpec::equally_spaced(p);
    Philox curves(derive_key(seed, 0, kTrainCurves));
    Philox noise(derive_key(seed, 0, kTrainCurveNoise));
    Philox resp(derive_key(seed, 0, kTrainResponseNoise));
    ScenarioDraw d;
    d.X_clean = cosine_curves(n, grid, curves);
    d.sigma_e = sigma_x;
    d.X = with_noise(d.X_clean, sigma_x, noise);
    d.beta = cosine_beta(grid);
    d.y_clean = d.X * d.beta;
    d.sigma_eps = calibrate_noise(d.y_clean, r2_target);
    d.y = d.y_clean + normals(n, d.sigma_eps, resp);
    return d;
}

Matrix synthetic_templates(Index p, std::uint64_t seed, Index count)
{
    if (p < 2 || count < 1) throw Error(ErrorKind::InvalidArgument, "templates need p >= 2 and count >= 1");
    const GridSpec grid = GridSpec::equally_spaced(p);
    Philox rng(derive_key(seed, 0, 0));
    constexpr int pool_size = 24;
    Matrix T(p, count);
    for (Index k = 0; k < count; ++k) {
        std::vector<int> pool(pool_size);
        std::iota(pool.begin(), pool.end(), 0);
        const int bumps = 5 + static_cast<int>(rng.next_u32() % 4u);
        Vector s = Vector::Zero(p);
        for (int b = 0; b < bumps; ++b) {
            const auto pick = b + static_cast<int>(rng.next_u32() % static_cast<std::uint32_t>(pool_size - b));
            std::swap(pool[static_cast<std::size_t>(b)], pool[static_cast<std::size_t>(pick)]);
            const double center = (pool[static_cast<std::size_t>(b)] + 0.5) / pool_size;
            const double spread = rng.uniform(2000.0, 20000.0);
            s += rng.uniform(0.3, 1.0) * gaussian_bump(grid, center, spread);
        }
        T.col(k) = s / s.norm();
    }
    return T;
}

Vector mixtures_beta(const Matrix& templates, std::uint64_t seed, const MixtureOptions& options)
{
    if (options.target_template < 0 || options.target_template >= templates.cols())
        throw Error(ErrorKind::InvalidArgument, "target template index out of range");
    Philox weights_rng(derive_key(seed, 0, kMixtureConstruction));
    Philox noise_rng(derive_key(seed, 0, kMixtureConstructionNoise));
    Matrix C;
    const Matrix clean = mixture_curves(options.construction_n, templates, weights_rng, &C);
    const Matrix X0 = with_noise(clean, measurement_sigma(clean, options.construction_snr), noise_rng);
    const Vector y0 = options.response_scale * C.col(options.target_template);
    const DesignMatrix Xc = DesignMatrix::centered_copy(X0);
    const Vector yc = (y0.array() - y0.mean()).matrix();
    const PenaltyOperator L = identity_penalty(templates.rows());
    double alpha = 0.0;
    try {
        alpha = reml_select_alpha(Xc, L, yc).alpha_hat;
    } catch (const FlatLikelihoodError& e) {
        // y0 is an exact mixture weight, so the error variance often runs to
        // zero; the lower bracket end is the min-norm limit of the ridge path.
        if (!e.at_lower()) throw;
        alpha = e.boundary_alpha();
    }
    return StandardFormSolver(Xc, L, yc).beta(alpha);
}

ScenarioDraw gen_mixtures(Index n, std::uint64_t seed, const Matrix& templates, double r2_target,
                          const MixtureOptions& options)
{
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "n must be >= 2");
    Philox curves(derive_key(seed, 0, kTrainCurves));
    Philox resp(derive_key(seed, 0, kTrainResponseNoise));
    ScenarioDraw d;
    d.beta = mixtures_beta(templates, seed, options);
    d.X_clean = mixture_curves(n, templates, curves);
    d.X = d.X_clean;
    d.y_clean = d.X * d.beta;
    d.sigma_eps = calibrate_noise(d.y_clean, r2_target);
    d.y = d.y_clean + normals(n, d.sigma_eps, resp);
    return d;
}

Matrix prior_basis_bumps(const GridSpec& grid, const std::vector<int>& centers)
{
    Matrix Q(grid.p(), static_cast<Index>(centers.size()));
    for (std::size_t j = 0; j < centers.size(); ++j)
        Q.col(static_cast<Index>(j)) = gaussian_bump(grid, bump_center(centers[j]), kBumpSpread);
    return Q;
}

Matrix prior_basis_cosine(const GridSpec& grid, int first, int last)
{
    if (first < 1 || last < first) throw Error(ErrorKind::InvalidArgument, "invalid cosine index range");
    Matrix Q(grid.p(), last - first + 1);
    for (int j = first; j <= last; ++j) Q.col(j - first) = cosine_basis(grid, j);
    return Q;
}

std::vector<int> prior_u_set()
{
    std::vector<int> out;
    for (int j = 2; j <= 30; j += 2) out.push_back(j);
    return out;
}

SubspacePrior named_prior(std::string_view name, const GridSpec& grid, const Matrix* templates)
{
    if (name == "L_V") return orthonormal_projector(prior_basis_bumps(grid, kPriorV));
    if (name == "L_U") return orthonormal_projector(prior_basis_bumps(grid, prior_u_set()));
    if (name == "L_F") return orthonormal_projector(prior_basis_cosine(grid, 5, 17));
    if (name == "L_G") return orthonormal_projector(prior_basis_cosine(grid, 4, 20));
    if (name == "templates") {
        if (!templates) throw Error(ErrorKind::ConfigError, "the templates prior needs the mixtures scenario");
        return orthonormal_projector(*templates);
    }
    throw Error(ErrorKind::ConfigError, "unknown prior '" + std::string(name) + "'");
}

std::vector<double> log_grid(double log10_lo, double log10_hi, Index count)
{
    if (count < 1) throw Error(ErrorKind::EmptyGrid, "grid needs at least one point");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) {
        const double t = count == 1 ? log10_lo
                                    : log10_lo + (log10_hi - log10_lo) * static_cast<double>(i)
                                                     / static_cast<double>(count - 1);
        out.push_back(std::pow(10.0, t));
    }
    return out;
}

SimulationSpec default_spec(Scenario scenario)
{
    SimulationSpec s;
    s.scenario = scenario;
    s.alpha_grid = log_grid(-8.0, 6.0, 57);
    const std::vector<double> ab_grid = {1.0, 3.0, 10.0, 30.0, 100.0, 300.0};
    auto method = [](std::string name, MethodKind kind) {
        MethodConfig m;
        m.name = std::move(name);
        m.kind = kind;
        return m;
    };
    auto projection = [&](std::string name, std::string prior, std::vector<double> a_grid, double c) {
        MethodConfig m = method(std::move(name), MethodKind::Projection);
        m.prior = std::move(prior);
        m.a_grid = std::move(a_grid);
        m.product_const = c;
        return m;
    };
    MethodConfig shift = method("D2+aI", MethodKind::D2Shift);
    shift.a_grid = {0.0, 1e-4, 1e-3, 1e-2, 1e-1};
    switch (scenario) {
    case Scenario::Bumps:
        shift.a_grid.push_back(0.3);
        s.n = 50;
        s.p = 250;
        s.r2_targets = {0.8};
        s.snr_targets = {10.0};
        s.methods = {projection("L_V", "L_V", ab_grid, 1.0), projection("L_U", "L_U", ab_grid, 1.0),
                     method("PCR", MethodKind::Pcr), method("ridge", MethodKind::Ridge),
                     method("D2", MethodKind::D2), shift};
        s.partial_sum_methods = {"L_V", "ridge", "D2"};
        s.partial_sum_ks = {1, 3, 5, 7, 9, 15, 25};
        break;
    case Scenario::Cosine:
        s.n = 200;
        s.p = 100;
        s.r2_targets = {0.8};
        s.snr_targets = {10.0};
        s.methods = {projection("L_F", "L_F", {1.0}, 0.0), projection("L_G", "L_G", {1.0}, 0.0),
                     method("PCR", MethodKind::Pcr), method("ridge", MethodKind::Ridge),
                     method("D2", MethodKind::D2), shift};
        break;
    case Scenario::Mixtures:
        s.n = 50;
        s.p = 600;
        s.r2_targets = {0.8};
        s.snr_targets = {10.0};
        s.methods = {projection("L_T", "templates", ab_grid, 1.0), method("PCR", MethodKind::Pcr),
                     method("ridge", MethodKind::Ridge), method("D2", MethodKind::D2)};
        break;
    }
    s.replicates = 100;
    return s;
}

const SettingSummary& StudyResult::find(double r2, double snr, std::string_view method) const
{
    for (const SettingSummary& s : summary)
        if (s.r2 == r2 && s.snr == snr && s.method == method) return s;
    throw Error(ErrorKind::InvalidArgument, "no summary row for method '" + std::string(method) + "'");
}

unsigned default_worker_count()
{
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("PEER_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<unsigned>(std::min<long>(v, 1024));
    }
    return hw;
}

namespace {

struct Penalties {
    GridSpec grid;
    Matrix templates;
    Vector beta;
    std::map<std::string, SubspacePrior> priors;
    std::optional<PenaltyOperator> d2;
    std::map<double, PenaltyOperator> d2_shift;
    std::optional<PenaltyOperator> goutis;
};

struct TrainData {
    DesignMatrix Xc;
    Vector yc;
    Vector x_mean;
    double y_mean = 0.0;
    Matrix X_test;
    Vector y_test;
    double sigma_eps = 0.0;
};

struct Choice {
    Vector beta;
    double alpha = std::numeric_limits<double>::quiet_NaN();
    double a = std::numeric_limits<double>::quiet_NaN();
    double b = std::numeric_limits<double>::quiet_NaN();
    Index components = 0;
    std::optional<PenaltyOperator> penalty;  ///< for partial sums
};

double prediction_error(const TrainData& td, const Vector& beta)
{
    const Vector pred = ((td.X_test.rowwise() - td.x_mean.transpose()) * beta).array() + td.y_mean;
    return (td.y_test - pred).squaredNorm() / static_cast<double>(td.y_test.size());
}

// Oracle minimum over the alpha grid; ties keep the smaller alpha.
void oracle_alpha(const StandardFormSolver& solver, const std::vector<double>& alphas, const Vector& beta_true,
                  Choice& best, double& best_mse, double a, double b, const PenaltyOperator& L)
{
    for (double alpha : alphas) {
        Vector beta = solver.beta(alpha);
        const double mse = (beta - beta_true).squaredNorm();
        if (mse < best_mse) {
            best_mse = mse;
            best.beta = std::move(beta);
            best.alpha = alpha;
            best.a = a;
            best.b = b;
            best.penalty = L;
        }
    }
}

Choice fit_method(const MethodConfig& m, const SimulationSpec& spec, const Penalties& pen, const TrainData& td)
{
    const Vector& beta_true = pen.beta;
    Choice best;
    double best_mse = std::numeric_limits<double>::infinity();

    auto penalized = [&](const PenaltyOperator& L, double a, double b) {
        if (m.tuning == TuningRule::Reml) {
            const TuningResult t = reml_select_alpha(td.Xc, L, td.yc);
            Choice c;
            c.beta = StandardFormSolver(td.Xc, L, td.yc).beta(t.alpha_hat);
            c.alpha = t.alpha_hat;
            c.a = a;
            c.b = b;
            c.penalty = L;
            return c;
        }
        oracle_alpha(StandardFormSolver(td.Xc, L, td.yc), spec.alpha_grid, beta_true, best, best_mse, a, b, L);
        return best;
    };

    switch (m.kind) {
    case MethodKind::Ridge: return penalized(identity_penalty(spec.p), 1.0, 1.0);
    case MethodKind::D2: return penalized(*pen.d2, 0.0, 0.0);
    case MethodKind::Goutis: return penalized(*pen.goutis, 0.0, 0.0);
    case MethodKind::D2Shift: {
        if (m.tuning == TuningRule::Reml) return penalized(pen.d2_shift.at(m.a_grid.front()), m.a_grid.front(), 0.0);
        std::vector<double> as = m.a_grid;
        std::sort(as.begin(), as.end());
        for (double a : as) penalized(pen.d2_shift.at(a), a, 0.0);
        return best;
    }
    case MethodKind::Projection: {
        const SubspacePrior& prior = pen.priors.at(m.prior);
        if (m.tuning == TuningRule::Reml) {
            const double a = m.a_grid.front();
            return penalized(projection_penalty(prior, a, m.product_const / a), a, m.product_const / a);
        }
        std::vector<double> as = m.a_grid;
        std::sort(as.begin(), as.end());
        for (double a : as) penalized(projection_penalty(prior, a, m.product_const / a), a, m.product_const / a);
        return best;
    }
    case MethodKind::Pcr: {
        const ThinSvd svd = thin_svd(td.Xc.values());
        const Vector coef = (svd.U.leftCols(svd.rank).transpose() * td.yc).cwiseQuotient(svd.s.head(svd.rank));
        Vector beta = Vector::Zero(spec.p);
        for (Index d = 1; d <= svd.rank; ++d) {
            beta += coef(d - 1) * svd.V.col(d - 1);
            const double mse = (beta - beta_true).squaredNorm();
            if (mse < best_mse) {
                best_mse = mse;
                best.beta = beta;
                best.components = d;
            }
        }
        return best;
    }
    case MethodKind::Stein: {
        const Vector mn = fit_min_norm(td.Xc, td.yc).beta;
        for (double alpha : spec.alpha_grid) {
            Vector beta = mn / (1.0 + alpha);
            const double mse = (beta - beta_true).squaredNorm();
            if (mse < best_mse) {
                best_mse = mse;
                best.beta = std::move(beta);
                best.alpha = alpha;
            }
        }
        return best;
    }
    case MethodKind::MinNorm: best.beta = fit_min_norm(td.Xc, td.yc).beta; return best;
    case MethodKind::Ideal: best.beta = fit_ideal_filter(td.Xc, td.yc, beta_true, td.sigma_eps).beta; return best;
    }
    return best;
}

Penalties build_penalties(const SimulationSpec& spec)
{
    Penalties pen;
    pen.grid = GridSpec::equally_spaced(spec.p);
    switch (spec.scenario) {
    case Scenario::Bumps: pen.beta = bumps_beta(pen.grid); break;
    case Scenario::Cosine: pen.beta = cosine_beta(pen.grid); break;
    case Scenario::Mixtures:
        pen.templates = synthetic_templates(spec.p, spec.template_seed);
        pen.beta = mixtures_beta(pen.templates, derive_key(spec.master_seed, ~0ULL, 0), spec.mixtures);
        break;
    }
    for (const MethodConfig& m : spec.methods) {
        switch (m.kind) {
        case MethodKind::D2:
            if (!pen.d2) pen.d2 = derivative_penalty(spec.p, 2);
            break;
        case MethodKind::D2Shift:
            if (m.a_grid.empty()) throw Error(ErrorKind::EmptyGrid, "method '" + m.name + "' needs an a_grid");
            for (double a : m.a_grid)
                if (!pen.d2_shift.count(a)) pen.d2_shift.emplace(a, derivative_penalty(spec.p, 2, a));
            break;
        case MethodKind::Projection:
            if (m.a_grid.empty()) throw Error(ErrorKind::EmptyGrid, "method '" + m.name + "' needs an a_grid");
            if (!pen.priors.count(m.prior))
                pen.priors.emplace(m.prior,
                                   named_prior(m.prior, pen.grid, spec.scenario == Scenario::Mixtures ? &pen.templates
                                                                                                      : nullptr));
            break;
        case MethodKind::Goutis:
            if (!pen.goutis) pen.goutis = goutis_penalty(spec.p);
            break;
        default: break;
        }
    }
    return pen;
}

double sample_sd(const Vector& v)
{
    const double mean = v.mean();
    return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

ReplicateResult run_replicate(const SimulationSpec& spec, const Penalties& pen, Index setting, double r2, double snr,
                              Index replicate)
{
    const auto rep = static_cast<std::uint64_t>(replicate);
    const std::uint64_t seed = spec.master_seed;
    Philox train_curves(derive_key(seed, rep, kTrainCurves));
    Philox train_noise(derive_key(seed, rep, kTrainCurveNoise));
    Philox train_resp(derive_key(seed, rep, kTrainResponseNoise));
    Philox test_curves(derive_key(seed, rep, kTestCurves));
    Philox test_noise(derive_key(seed, rep, kTestCurveNoise));
    Philox test_resp(derive_key(seed, rep, kTestResponseNoise));

    auto clean = [&](Philox& rng) {
        switch (spec.scenario) {
        case Scenario::Bumps: return bumps_curves(spec.n, pen.grid, rng, spec.bumps);
        case Scenario::Cosine: return cosine_curves(spec.n, pen.grid, rng);
        case Scenario::Mixtures: return mixture_curves(spec.n, pen.templates, rng);
        }
        return Matrix();
    };

    const Matrix Xtr_clean = clean(train_curves);
    const double sigma_e = measurement_sigma(Xtr_clean, snr);
    const Matrix Xtr = with_noise(Xtr_clean, sigma_e, train_noise);
    const Vector ytr_true = Xtr * pen.beta;
    const double sigma_eps = calibrate_noise(ytr_true, r2);
    const Vector eps = normals(spec.n, sigma_eps, train_resp);
    const Vector ytr = ytr_true + eps;

    const Matrix Xte = with_noise(clean(test_curves), sigma_e, test_noise);
    const Vector yte = Xte * pen.beta + normals(spec.n, sigma_eps, test_resp);

    ReplicateResult out;
    out.setting = setting;
    out.replicate = replicate;
    const double sy = sample_sd(ytr_true);
    out.realized_r2 = sy * sy / (sy * sy + std::pow(sample_sd(eps), 2));
    if (sigma_e > 0) {
        const Matrix e = Xtr - Xtr_clean;
        const double mean = e.mean();
        const double sd = std::sqrt((e.array() - mean).square().sum() / static_cast<double>(e.size() - 1));
        out.realized_snr = signal_scale(Xtr_clean) / sd;
    } else {
        out.realized_snr = kInfiniteSnr;
    }

    TrainData td;
    td.x_mean = Xtr.colwise().mean().transpose();
    td.Xc = DesignMatrix::centered_copy(Xtr);
    td.y_mean = ytr.mean();
    td.yc = (ytr.array() - td.y_mean).matrix();
    td.X_test = Xte;
    td.y_test = yte;
    td.sigma_eps = sigma_eps;

    for (const MethodConfig& m : spec.methods) {
        MethodOutcome o;
        try {
            Choice c = fit_method(m, spec, pen, td);
            if (c.beta.size() != spec.p) throw Error(ErrorKind::SingularSystem, "no finite fit on the grid");
            o.mse = (c.beta - pen.beta).squaredNorm();
            o.pe = prediction_error(td, c.beta);
            o.alpha = c.alpha;
            o.a = c.a;
            o.b = c.b;
            o.components = c.components;
            if (std::find(spec.partial_sum_methods.begin(), spec.partial_sum_methods.end(), m.name)
                    != spec.partial_sum_methods.end()
                && c.penalty) {
                auto [Xr, yr] = drop_intercept(td.Xc.values(), td.yc);
                const DesignMatrix Xd(std::move(Xr));
                const GsvdFactors f = compute_gsvd(Xd, *c.penalty);
                const PenalizedFit fit = fit_from_factors(f, Xd, yr, c.alpha);
                std::vector<Index> ks;
                for (Index k : spec.partial_sum_ks) ks.push_back(std::min(k, fit.components.cols()));
                const std::vector<Vector> sums = partial_sums(fit, ks, PartialSumOrder::DominantFirst);
                for (std::size_t i = 0; i < ks.size(); ++i)
                    out.partial_sums.push_back({m.name, spec.partial_sum_ks[i], (sums[i] - pen.beta).norm()});
            }
        } catch (const std::exception& e) {
            o.error = e.what();
        }
        out.outcomes.push_back(std::move(o));
    }
    return out;
}

double median_of(std::vector<double> v)
{
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

double mean_of(const std::vector<double>& v)
{
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

void validate(const SimulationSpec& spec)
{
    if (spec.n < 3 || spec.p < 3) throw Error(ErrorKind::ConfigError, "n and p must be at least 3");
    if (spec.replicates < 1) throw Error(ErrorKind::ConfigError, "replicates must be positive");
    if (spec.r2_targets.empty() || spec.snr_targets.empty())
        throw Error(ErrorKind::ConfigError, "need at least one r2 and one snr target");
    if (spec.methods.empty()) throw Error(ErrorKind::ConfigError, "no methods configured");
    for (double r2 : spec.r2_targets)
        if (!(r2 > 0 && r2 <= 1)) throw Error(ErrorKind::ConfigError, "r2 targets must lie in (0, 1]");
    for (double snr : spec.snr_targets)
        if (!(snr > 0)) throw Error(ErrorKind::ConfigError, "snr targets must be positive");
    bool needs_alpha = false;
    for (const MethodConfig& m : spec.methods)
        needs_alpha = needs_alpha
                   || (m.tuning == TuningRule::Oracle
                       && (m.kind == MethodKind::Ridge || m.kind == MethodKind::D2 || m.kind == MethodKind::D2Shift
                           || m.kind == MethodKind::Projection || m.kind == MethodKind::Goutis
                           || m.kind == MethodKind::Stein));
    if (needs_alpha && spec.alpha_grid.empty()) throw Error(ErrorKind::EmptyGrid, "alpha_grid is empty");
    for (std::size_t i = 0; i < spec.methods.size(); ++i)
        for (std::size_t j = i + 1; j < spec.methods.size(); ++j)
            if (spec.methods[i].name == spec.methods[j].name)
                throw Error(ErrorKind::ConfigError, "duplicate method name '" + spec.methods[i].name + "'");
}

}  // namespace

StudyResult run_study(const SimulationSpec& spec_in, unsigned workers)
{
    validate(spec_in);
    SimulationSpec spec = spec_in;
    std::sort(spec.alpha_grid.begin(), spec.alpha_grid.end());
    const Penalties pen = build_penalties(spec);

    StudyResult result;
    result.spec = spec;
    result.beta = pen.beta;
    result.grid = pen.grid.t;
    for (double r2 : spec.r2_targets)
        for (double snr : spec.snr_targets) result.settings.emplace_back(r2, snr);

    const std::size_t tasks = result.settings.size() * static_cast<std::size_t>(spec.replicates);
    result.replicates.resize(tasks);
    std::vector<std::exception_ptr> failures(tasks);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t t = next++; t < tasks; t = next++) {
            const std::size_t s = t / static_cast<std::size_t>(spec.replicates);
            const auto r = static_cast<Index>(t % static_cast<std::size_t>(spec.replicates));
            try {
                result.replicates[t] = run_replicate(spec, pen, static_cast<Index>(s), result.settings[s].first,
                                                     result.settings[s].second, r);
            } catch (...) {
                failures[t] = std::current_exception();
            }
        }
    };
    if (workers == 0) workers = default_worker_count();
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, tasks));
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& th : pool) th.join();
    }
    for (const std::exception_ptr& e : failures)
        if (e) std::rethrow_exception(e);

    for (std::size_t s = 0; s < result.settings.size(); ++s) {
        for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
            SettingSummary row;
            row.r2 = result.settings[s].first;
            row.snr = result.settings[s].second;
            row.method = spec.methods[mi].name;
            std::vector<double> mse;
            std::vector<double> pe;
            for (Index r = 0; r < spec.replicates; ++r) {
                const ReplicateResult& rr =
                    result.replicates[s * static_cast<std::size_t>(spec.replicates) + static_cast<std::size_t>(r)];
                const MethodOutcome& o = rr.outcomes[mi];
                ++row.count;
                if (!o.error.empty() || !std::isfinite(o.mse)) {
                    ++row.failures;
                    result.error_log.push_back("r2=" + format_double(row.r2) + " snr=" + format_double(row.snr)
                                               + " replicate=" + std::to_string(r) + " method=" + row.method + ": "
                                               + (o.error.empty() ? std::string("non-finite result") : o.error));
                    continue;
                }
                mse.push_back(o.mse);
                pe.push_back(o.pe);
            }
            row.median_mse = median_of(mse);
            row.mean_mse = mean_of(mse);
            row.median_pe = median_of(pe);
            row.mean_pe = mean_of(pe);
            result.summary.push_back(std::move(row));
        }
    }
    return result;
}

std::string format_double(double value)
{
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

void write_study(const StudyResult& result, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
    auto open = [&](const char* name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw Error(ErrorKind::IoError, "cannot write " + (dir / name).string());
        return f;
    };
    const SimulationSpec& spec = result.spec;
    const std::string scen(to_string(spec.scenario));
    const std::string np = std::to_string(spec.n) + "," + std::to_string(spec.p);

    {
        std::ofstream f = open("results.csv");
        f << "scenario,n,p,r2,snr,replicate,method,mse,pe_x1000,alpha,a,b,components,status\n";
        for (const ReplicateResult& rr : result.replicates) {
            const auto& st = result.settings[static_cast<std::size_t>(rr.setting)];
            for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
                const MethodOutcome& o = rr.outcomes[mi];
                f << scen << ',' << np << ',' << format_double(st.first) << ',' << format_double(st.second) << ','
                  << rr.replicate << ',' << spec.methods[mi].name << ',' << format_double(o.mse) << ','
                  << format_double(1000.0 * o.pe) << ',' << format_double(o.alpha) << ',' << format_double(o.a)
                  << ',' << format_double(o.b) << ',' << o.components << ',' << (o.error.empty() ? "ok" : "error")
                  << '\n';
            }
        }
    }
    {
        std::ofstream f = open("summary.csv");
        f << "scenario,n,p,r2,snr,method,replicates,failures,median_mse,mean_mse,median_pe_x1000,mean_pe_x1000\n";
        for (const SettingSummary& s : result.summary)
            f << scen << ',' << np << ',' << format_double(s.r2) << ',' << format_double(s.snr) << ',' << s.method
              << ',' << s.count << ',' << s.failures << ',' << format_double(s.median_mse) << ','
              << format_double(s.mean_mse) << ',' << format_double(1000.0 * s.median_pe) << ','
              << format_double(1000.0 * s.mean_pe) << '\n';
    }
    {
        std::ofstream f = open("partial_sums.csv");
        f << "scenario,r2,snr,replicate,method,k,error_norm\n";
        for (const ReplicateResult& rr : result.replicates) {
            const auto& st = result.settings[static_cast<std::size_t>(rr.setting)];
            for (const PartialSumRecord& ps : rr.partial_sums)
                f << scen << ',' << format_double(st.first) << ',' << format_double(st.second) << ','
                  << rr.replicate << ',' << ps.method << ',' << ps.k << ',' << format_double(ps.error_norm) << '\n';
        }
    }
    {
        std::ofstream f = open("beta.csv");
        f << "t,beta\n";
        for (Index j = 0; j < result.beta.size(); ++j)
            f << format_double(result.grid(j)) << ',' << format_double(result.beta(j)) << '\n';
    }
    {
        std::ofstream f = open("errors.log");
        for (const std::string& line : result.error_log) f << line << '\n';
    }
}

}  // namespace peer
