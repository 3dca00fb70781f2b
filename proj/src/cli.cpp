#include "peer/cli.hpp"

#include "peer/diagnostics.hpp"
#include "peer/error.hpp"
#include "peer/estimators.hpp"
#include "peer/gsvd.hpp"
#include "peer/io.hpp"
#include "peer/linalg.hpp"
#include "peer/simharness.hpp"
#include "peer/tuning.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace peer {

namespace {

namespace fs = std::filesystem;

/// Missing or conflicting arguments detected after CLI11 parsing.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Json to_array(const Vector& v)
{
    Json a = Json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

std::vector<double> parse_list(const std::string& text, const char* flag)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
        if (used == 0 || used != item.size())
            throw UsageError(std::string(flag) + ": not a number: '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
    return out;
}

Json error_record(const std::exception& e)
{
    Json rec{{"message", e.what()}};
    if (const auto* pe = dynamic_cast<const ParseError*>(&e)) {
        rec["line"] = pe->line();
        rec["column"] = pe->column();
    }
    if (const auto* fe = dynamic_cast<const FlatLikelihoodError*>(&e)) {
        rec["boundary_alpha"] = fe->boundary_alpha();
        rec["at_lower"] = fe->at_lower();
    }
    if (const auto* re = dynamic_cast<const RankDeficientError*>(&e)) {
        rec["numerical_rank"] = re->numerical_rank();
        rec["required_rank"] = re->required_rank();
    }
    if (const auto* pe = dynamic_cast<const Error*>(&e)) rec["kind"] = std::string(to_string(pe->kind()));
    else rec["kind"] = "Internal";
    return Json{{"error", rec}};
}

/// Flags shared by the data-driven commands; explicit flags override --config.
struct CommonArgs {
    std::string config;
    std::string x;
    std::string y;
    std::string penalty;
    std::string beta_true;
    double alpha = 1.0;
    double sigma_eps = 1.0;
    bool center = false;
    bool header = false;
    std::string out = ".";
};

struct Options {
    CLI::Option* alpha = nullptr;
    CLI::Option* sigma_eps = nullptr;
    CLI::Option* center = nullptr;
    CLI::Option* header = nullptr;
    CLI::Option* out = nullptr;
};

Options add_common(CLI::App* cmd, CommonArgs& a, bool with_y, bool with_alpha)
{
    Options o;
    cmd->add_option("--config", a.config, "experiment config JSON");
    cmd->add_option("--x", a.x, "predictor matrix CSV (n x p)");
    if (with_y) cmd->add_option("--y", a.y, "response CSV (length n)");
    cmd->add_option("--penalty", a.penalty, "penalty descriptor: inline JSON, @file or file");
    if (with_alpha) o.alpha = cmd->add_option("--alpha", a.alpha, "penalty weight")->check(CLI::NonNegativeNumber);
    cmd->add_option("--beta-true", a.beta_true, "true coefficient CSV");
    o.sigma_eps = cmd->add_option("--sigma-eps", a.sigma_eps, "noise standard deviation")
                      ->check(CLI::NonNegativeNumber);
    o.center = cmd->add_flag("--center", a.center, "center X and y");
    o.header = cmd->add_flag("--header", a.header, "CSV files start with a header row");
    o.out = cmd->add_option("--out", a.out, "output directory");
    return o;
}

ExperimentConfig resolve_config(const CommonArgs& a, const Options& o, fs::path& base_dir)
{
    ExperimentConfig c;
    base_dir.clear();
    if (!a.config.empty()) {
        base_dir = fs::path(a.config).parent_path();
        c = parse_experiment_config(read_json_file(a.config), base_dir);
    }
    if (!a.x.empty()) c.x_path = a.x;
    if (!a.y.empty()) c.y_path = a.y;
    if (!a.penalty.empty()) c.penalty = parse_json_argument(a.penalty);
    if (!a.beta_true.empty()) c.beta_true_path = fs::path(a.beta_true);
    if (o.alpha && o.alpha->count()) c.alpha = a.alpha;
    if (o.sigma_eps->count()) c.sigma_eps = a.sigma_eps;
    if (o.center->count()) c.center = a.center;
    if (o.header->count()) c.header = a.header;
    if (o.out->count() || a.config.empty()) c.out_dir = a.out;
    if (c.x_path.empty()) throw UsageError("--x is required");
    return c;
}

DesignMatrix load_design(const ExperimentConfig& c)
{
    const Matrix X = load_csv(c.x_path, c.header);
    return c.center ? DesignMatrix::centered_copy(X) : DesignMatrix(X);
}

Dataset load_data(const ExperimentConfig& c)
{
    if (c.y_path.empty()) throw UsageError("--y is required");
    return load_dataset(c.x_path, c.y_path, c.center, c.header);
}

Vector load_beta(const ExperimentConfig& c, Index p)
{
    if (!c.beta_true_path) throw UsageError("--beta-true is required");
    Vector beta = load_vector(*c.beta_true_path, c.header);
    if (beta.size() != p)
        throw Error(ErrorKind::ShapeMismatch, "beta_true has length " + std::to_string(beta.size()) + ", expected "
                                                  + std::to_string(p));
    return beta;
}

/// Centered designs lose one rank; the GSVD runs on the intercept complement.
DesignMatrix reduced_design(const DesignMatrix& X)
{
    if (!X.centered()) return X;
    return DesignMatrix(drop_intercept(X.values(), Vector::Zero(X.n())).first);
}

Json diagnostics_json(const GsvdFactors& f, double alpha, const Vector& beta_true, double sigma_eps)
{
    const FitDiagnostics d = diagnose(f, alpha, beta_true, sigma_eps);
    Json comps = Json::array();
    for (std::size_t k = 0; k < d.components.size(); ++k) {
        const ComponentDiagnostics& c = d.components[k];
        comps.push_back({{"k", k},
                         {"sigma", c.sigma},
                         {"mu", c.mu},
                         {"filter", c.filter},
                         {"bias_coefficient", c.bias_coefficient},
                         {"variance", c.variance}});
    }
    return Json{{"alpha", alpha},
                {"sigma_eps", sigma_eps},
                {"bias_norm", d.bias.norm()},
                {"trace_var", d.trace_variance},
                {"mse", d.mse_theoretical},
                {"mse_bound", d.mse_bound},
                {"bias", to_array(d.bias)},
                {"variance_diagonal", to_array(d.variance_diagonal)},
                {"per_component", comps}};
}

int cmd_gsvd(const CommonArgs& a, const Options& o, const std::string& l_path, std::ostream& out)
{
    fs::path base;
    ExperimentConfig c = resolve_config(a, o, base);
    const DesignMatrix X = load_design(c);
    PenaltyOperator L;
    if (!l_path.empty()) {
        if (!a.penalty.empty()) throw UsageError("give either --l or --penalty");
        L = PenaltyOperator(load_csv(l_path, c.header), PenaltyKind::Custom);
    } else {
        L = parse_penalty(c.penalty, X, base);
    }
    const GsvdFactors f = compute_gsvd(X, L);
    const GsvdResiduals r = gsvd_residuals(f, X.values(), L.values());
    const fs::path dir = c.out_dir;
    save_csv(dir / "U.csv", f.U);
    save_csv(dir / "V.csv", f.V);
    save_csv(dir / "W.csv", f.W);
    save_csv(dir / "Wtilde.csv", f.Wtilde);
    save_vector(dir / "sigma.csv", f.sigma, "sigma");
    save_vector(dir / "mu.csv", f.mu, "mu");
    constexpr double tol = 1e-10;
    const bool passed = r.x_reconstruction <= tol && r.l_reconstruction <= tol && r.normalization <= 1e-12
                        && r.x_offdiag <= tol && r.l_offdiag <= tol && r.diag_sum <= tol;
    const Json report{{"n", f.n},
                      {"m", f.m},
                      {"p", f.p},
                      {"q", f.q},
                      {"d", f.d},
                      {"x_reconstruction", r.x_reconstruction},
                      {"l_reconstruction", r.l_reconstruction},
                      {"normalization", r.normalization},
                      {"x_offdiag", r.x_offdiag},
                      {"l_offdiag", r.l_offdiag},
                      {"diag_sum", r.diag_sum},
                      {"null_residual", r.null_residual},
                      {"u_orthonormality", r.u_orthonormality},
                      {"v_orthonormality", r.v_orthonormality},
                      {"tolerance", tol},
                      {"passed", passed}};
    write_json_file(dir / "residuals.json", report);
    out << "gsvd: n=" << f.n << " m=" << f.m << " p=" << f.p << " d=" << f.d
        << " x_reconstruction=" << r.x_reconstruction << " l_reconstruction=" << r.l_reconstruction
        << (passed ? " passed" : " FAILED") << '\n';
    if (!passed) throw Error(ErrorKind::NonOrthogonalDecomposition, "decomposition residuals exceed tolerance");
    return 0;
}

int cmd_fit(const CommonArgs& a, const Options& o, const std::string& path_flag, std::ostream& out)
{
    fs::path base;
    ExperimentConfig c = resolve_config(a, o, base);
    if (!path_flag.empty()) c.path = path_flag;
    const Dataset data = load_data(c);
    const PenaltyOperator L = parse_penalty(c.penalty, data.X, base);
    const FitPath path = parse_fit_path(c.path);
    PenalizedFit fit;
    if (data.X.centered() && path != FitPath::Direct) {
        auto [Xr, yr] = drop_intercept(data.X.values(), data.y);
        fit = fit_penalized(DesignMatrix(std::move(Xr)), L, yr, c.alpha, path);
        fit.fitted = data.X.values() * fit.beta;
    } else {
        fit = fit_penalized(data.X, L, data.y, c.alpha, path);
    }
    Json j{{"n", data.X.n()},
           {"p", data.X.p()},
           {"alpha", c.alpha},
           {"path", std::string(to_string(path))},
           {"method", std::string(to_string(fit.method))},
           {"penalty", c.penalty},
           {"centered", c.center},
           {"intercept", data.y_mean - data.x_mean.dot(fit.beta)},
           {"jitter_applied", fit.jitter_applied},
           {"beta", to_array(fit.beta)},
           {"filters", to_array(fit.filters)},
           {"fitted", to_array(fit.fitted)}};
    if (c.beta_true_path) {
        const Vector beta_true = load_beta(c, data.X.p());
        j["estimation_error2"] = (fit.beta - beta_true).squaredNorm();
        j["diagnostics"] = diagnostics_json(compute_gsvd(reduced_design(data.X), L), c.alpha, beta_true, c.sigma_eps);
    }
    write_json_file(fs::path(c.out_dir) / "fit.json", j);
    out << "fit: p=" << data.X.p() << " alpha=" << c.alpha << " path=" << to_string(path)
        << " ||beta||=" << fit.beta.norm() << '\n';
    return 0;
}

int cmd_diagnose(const CommonArgs& a, const Options& o, std::ostream& out)
{
    fs::path base;
    ExperimentConfig c = resolve_config(a, o, base);
    const DesignMatrix X = load_design(c);
    const PenaltyOperator L = parse_penalty(c.penalty, X, base);
    const Vector beta_true = load_beta(c, X.p());
    const Json j = diagnostics_json(compute_gsvd(reduced_design(X), L), c.alpha, beta_true, c.sigma_eps);
    write_json_file(fs::path(c.out_dir) / "diagnostics.json", j);
    out << "diagnose: mse=" << j.at("mse").get<double>() << " bias_norm=" << j.at("bias_norm").get<double>()
        << " trace_var=" << j.at("trace_var").get<double>() << '\n';
    return 0;
}

struct TuneArgs {
    std::string method;
    std::string grid;
    std::string alphas;
    std::string prior;
    std::string criterion;
    double product_const = 1.0;
    CLI::Option* const_opt = nullptr;
};

int cmd_tune(const CommonArgs& a, const Options& o, const TuneArgs& t, std::ostream& out)
{
    fs::path base;
    ExperimentConfig c = resolve_config(a, o, base);
    if (!t.method.empty()) c.tuning_method = t.method;
    if (!t.grid.empty()) c.grid = parse_list(t.grid, "--grid");
    if (!t.alphas.empty()) c.alphas = parse_list(t.alphas, "--alphas");
    if (!t.prior.empty()) c.prior = parse_json_argument(t.prior);
    if (!t.criterion.empty()) c.criterion = t.criterion;
    if (t.const_opt->count()) c.product_const = t.product_const;
    const Dataset data = load_data(c);
    Json j;
    if (c.tuning_method == "reml") {
        const PenaltyOperator L = parse_penalty(c.penalty, data.X, base);
        const TuningResult r = reml_select_alpha(data.X, L, data.y);
        Json trace = Json::array();
        for (const TracePoint& pt : r.criterion_trace) trace.push_back({{"alpha", pt.alpha}, {"value", pt.value}});
        j = {{"method", "reml"},
             {"alpha_hat", r.alpha_hat},
             {"sigma_eps_hat", r.sigma_eps_hat},
             {"sigma_b_hat", r.sigma_b_hat},
             {"criterion_trace", trace}};
    } else if (c.tuning_method == "grid") {
        if (c.prior.is_null()) throw UsageError("grid tuning needs --prior");
        if (c.grid.empty()) throw UsageError("grid tuning needs --grid");
        const SubspacePrior prior = parse_prior(c.prior, data.X.p(), base);
        GridOptions g;
        g.product_const = c.product_const;
        if (!c.alphas.empty()) g.alphas = c.alphas;
        g.criterion = parse_grid_criterion(c.criterion);
        if (g.criterion == GridCriterion::MseOracle) g.beta_true = load_beta(c, data.X.p());
        const TuningResult r = grid_search(data.X, prior, data.y, c.grid, g);
        Json trace = Json::array();
        for (const TracePoint& pt : r.criterion_trace)
            trace.push_back({{"a", pt.a}, {"b", pt.b}, {"alpha", pt.alpha}, {"value", pt.value}});
        j = {{"method", "grid"},
             {"criterion", std::string(to_string(g.criterion))},
             {"product_const", g.product_const},
             {"alpha_hat", r.alpha_hat},
             {"a_hat", r.a_hat.value_or(std::nan(""))},
             {"b_hat", r.b_hat.value_or(std::nan(""))},
             {"criterion_trace", trace}};
    } else {
        throw UsageError("--method must be reml or grid");
    }
    write_json_file(fs::path(c.out_dir) / "tuning.json", j);
    out << "tune: method=" << c.tuning_method << " alpha_hat=" << j.at("alpha_hat").get<double>() << '\n';
    return 0;
}

struct SimulateArgs {
    std::string spec;
    std::string scenario;
    std::string out = "results";
    unsigned threads = 0;
    long replicates = 0;
};

int cmd_simulate(const SimulateArgs& s, std::ostream& out)
{
    if (s.spec.empty() == s.scenario.empty()) throw UsageError("give exactly one of --spec or --scenario");
    SimulationSpec spec = s.spec.empty() ? default_spec(parse_scenario(s.scenario))
                                         : parse_simulation_spec(parse_json_argument(s.spec));
    if (s.replicates > 0) spec.replicates = s.replicates;
    const StudyResult result = run_study(spec, s.threads);
    const fs::path dir = s.out;
    write_study(result, dir);
    write_json_file(dir / "spec.json", to_json(spec));
    out << "simulate: " << to_string(spec.scenario) << ", " << result.settings.size() << " settings x "
        << spec.replicates << " replicates, " << result.error_log.size() << " method failures, written to "
        << dir.string() << '\n';
    return 0;
}

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

int cmd_report(const std::string& in, std::ostream& out)
{
    fs::path path = in;
    if (fs::is_directory(path)) path /= "summary.csv";
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw ParseError(1, 1, path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* k : {"scenario", "r2", "snr", "method", "replicates", "failures", "median_mse", "mean_mse",
                          "median_pe_x1000", "mean_pe_x1000"})
        if (!col.count(k)) throw ParseError(1, 1, path.string() + ": missing column '" + k + "'");
    std::string current;
    long line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> row = split_line(line);
        if (row.size() != header.size())
            throw ParseError(line_no, static_cast<long>(std::min(row.size(), header.size()) + 1),
                             path.string() + ": wrong number of fields");
        auto v = [&](const char* k) { return row[col.at(k)]; };
        auto short_num = [&](const char* k) {
            std::ostringstream s;
            s << std::stod(v(k));
            return s.str();
        };
        const std::string setting = v("scenario") + "  R2=" + short_num("r2") + "  S/N=" + short_num("snr");
        if (setting != current) {
            current = setting;
            out << '\n' << setting << '\n';
            out << std::left << std::setw(14) << "method" << std::right << std::setw(14) << "median MSE"
                << std::setw(14) << "mean MSE" << std::setw(16) << "median PE x1e3" << std::setw(14)
                << "mean PE x1e3" << std::setw(10) << "failed" << '\n';
        }
        auto num = [&](const char* k) {
            std::ostringstream s;
            s << std::setprecision(4) << std::stod(v(k));
            return s.str();
        };
        out << std::left << std::setw(14) << v("method") << std::right << std::setw(14) << num("median_mse")
            << std::setw(14) << num("mean_mse") << std::setw(16) << num("median_pe_x1000") << std::setw(14)
            << num("mean_pe_x1000") << std::setw(10) << (v("failures") + "/" + v("replicates")) << '\n';
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Penalized estimation for functional linear models", "peer"};
    app.require_subcommand(1);

    CommonArgs gsvd_args;
    std::string l_path;
    CLI::App* gsvd = app.add_subcommand("gsvd", "decompose (X, L) and check the factors");
    const Options gsvd_opts = add_common(gsvd, gsvd_args, false, false);
    gsvd->add_option("--l", l_path, "penalty matrix CSV");

    CommonArgs fit_args;
    std::string path_flag;
    CLI::App* fit = app.add_subcommand("fit", "fit a penalized estimate");
    const Options fit_opts = add_common(fit, fit_args, true, true);
    fit->add_option("--path", path_flag, "direct, gsvd or standard_form");

    CommonArgs diag_args;
    CLI::App* diag = app.add_subcommand("diagnose", "closed-form bias, variance and MSE");
    const Options diag_opts = add_common(diag, diag_args, false, true);

    CommonArgs tune_args;
    TuneArgs tune_extra;
    CLI::App* tune = app.add_subcommand("tune", "select tuning parameters");
    const Options tune_opts = add_common(tune, tune_args, true, false);
    tune->add_option("--method", tune_extra.method, "reml or grid");
    tune->add_option("--grid", tune_extra.grid, "comma-separated a values");
    tune->add_option("--alphas", tune_extra.alphas, "comma-separated alpha values");
    tune->add_option("--prior", tune_extra.prior, "prior descriptor: inline JSON, @file or file");
    tune->add_option("--criterion", tune_extra.criterion, "mse_oracle or validation");
    tune_extra.const_opt = tune->add_option("--const", tune_extra.product_const, "b = const / a")
                               ->check(CLI::PositiveNumber);

    SimulateArgs sim_args;
    CLI::App* sim = app.add_subcommand("simulate", "run a simulation study");
    sim->add_option("--spec", sim_args.spec, "simulation spec JSON");
    sim->add_option("--scenario", sim_args.scenario, "bumps, cosine or mixtures with default settings");
    sim->add_option("--out", sim_args.out, "output directory");
    sim->add_option("--threads", sim_args.threads, "worker threads (default PEER_THREADS or all cores)");
    sim->add_option("--replicates", sim_args.replicates, "override the replicate count")
        ->check(CLI::PositiveNumber);

    std::string report_in;
    CLI::App* report = app.add_subcommand("report", "tabulate a summary.csv");
    report->add_option("--in", report_in, "results directory or summary.csv")->required();

    auto usage = [&](const std::string& message) {
        err << "error: " << message << "\n\n";
        const auto parsed = app.get_subcommands();
        err << (parsed.empty() ? app.help() : parsed.front()->help());
        return 2;
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        return usage(e.what());
    }

    try {
        if (gsvd->parsed()) return cmd_gsvd(gsvd_args, gsvd_opts, l_path, out);
        if (fit->parsed()) return cmd_fit(fit_args, fit_opts, path_flag, out);
        if (diag->parsed()) return cmd_diagnose(diag_args, diag_opts, out);
        if (tune->parsed()) return cmd_tune(tune_args, tune_opts, tune_extra, out);
        if (sim->parsed()) return cmd_simulate(sim_args, out);
        if (report->parsed()) return cmd_report(report_in, out);
        return usage("no subcommand");
    } catch (const UsageError& e) {
        return usage(e.what());
    } catch (const std::exception& e) {
        err << error_record(e).dump() << '\n';
        return 1;
    }
}

int run_cli(int argc, const char* const* argv)
{
    return run_cli(argc, argv, std::cout, std::cerr);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    std::vector<const char*> argv{"peer"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace peer
