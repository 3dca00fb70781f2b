#include "peer/io.hpp"

#include "peer/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace peer {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& rel)
{
    const std::filesystem::path p(rel);
    return p.is_absolute() || base.empty() ? p : base / p;
}

double json_number(const Json& v, const std::string& where)
{
    if (!v.is_number()) throw Error(ErrorKind::ConfigError, where + " must be a number");
    return v.get<double>();
}

double json_snr(const Json& v)
{
    if (v.is_null()) return kInfiniteSnr;
    if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "infinity")) return kInfiniteSnr;
    return json_number(v, "snr target");
}

std::vector<double> json_numbers(const Json& v, const std::string& where)
{
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) throw Error(ErrorKind::ConfigError, where + " must be a number or an array of numbers");
    std::vector<double> out;
    for (const Json& e : v) out.push_back(json_number(e, where));
    return out;
}

std::string json_string(const Json& v, const std::string& where)
{
    if (!v.is_string()) throw Error(ErrorKind::ConfigError, where + " must be a string");
    return v.get<std::string>();
}

}  // namespace

CsvTable parse_csv(const std::string& text, bool header)
{
    CsvTable table;
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    long line_no = 0;
    std::size_t pos = 0;
    bool need_header = header;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string_view line = trim(std::string_view(text).substr(pos, end - pos));
        ++line_no;
        pos = end + 1;
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }
        const auto fields = split_fields(line);
        if (need_header) {
            for (auto f : fields) table.header.emplace_back(f);
            width = fields.size();
            need_header = false;
            continue;
        }
        if (width == 0) width = fields.size();
        if (fields.size() != width)
            throw ParseError(line_no, static_cast<long>(std::min(fields.size(), width) + 1),
                             "expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()));
        std::vector<double> row(width);
        for (std::size_t c = 0; c < width; ++c) {
            const std::string_view f = fields[c];
            const char* first = f.data();
            const char* last = f.data() + f.size();
            if (!f.empty() && *first == '+') ++first;
            const auto [ptr, ec] = std::from_chars(first, last, row[c]);
            if (f.empty() || ec != std::errc() || ptr != last)
                throw ParseError(line_no, static_cast<long>(c + 1), "not a number: '" + std::string(f) + "'");
        }
        rows.push_back(std::move(row));
        if (end == text.size()) break;
    }
    table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j) table.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return table;
}

CsvTable read_csv(const std::filesystem::path& path, bool header)
{
    try {
        return parse_csv(read_text(path), header);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), e.column(), path.string() + ": " + e.what());
    }
}

Matrix load_csv(const std::filesystem::path& path, bool header)
{
    return read_csv(path, header).values;
}

Vector load_vector(const std::filesystem::path& path, bool header)
{
    const Matrix m = load_csv(path, header);
    if (m.cols() == 1) return m.col(0);
    if (m.rows() == 1) return m.row(0).transpose();
    throw Error(ErrorKind::ShapeMismatch, path.string() + " is not a single row or column");
}

void save_csv(const std::filesystem::path& path, const Matrix& values, const std::vector<std::string>& header)
{
    if (!header.empty() && static_cast<Index>(header.size()) != values.cols())
        throw Error(ErrorKind::ShapeMismatch, "header width differs from the matrix");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    for (std::size_t j = 0; j < header.size(); ++j) f << (j ? "," : "") << header[j];
    if (!header.empty()) f << '\n';
    for (Index i = 0; i < values.rows(); ++i) {
        for (Index j = 0; j < values.cols(); ++j) f << (j ? "," : "") << format_double(values(i, j));
        f << '\n';
    }
    if (!f) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

void save_vector(const std::filesystem::path& path, const Vector& values, const std::string& name)
{
    save_csv(path, values, name.empty() ? std::vector<std::string>{} : std::vector<std::string>{name});
}

Dataset load_dataset(const std::filesystem::path& x_path, const std::filesystem::path& y_path, bool center,
                     bool header)
{
    Matrix X = load_csv(x_path, header);
    Vector y = load_vector(y_path, header);
    if (X.rows() != y.size())
        throw Error(ErrorKind::ShapeMismatch, "X has " + std::to_string(X.rows()) + " rows but y has "
                                                  + std::to_string(y.size()) + " entries");
    Dataset d;
    if (center) {
        d.x_mean = X.colwise().mean().transpose();
        d.y_mean = y.mean();
        d.X = DesignMatrix::centered_copy(X);
        d.y = (y.array() - d.y_mean).matrix();
    } else {
        d.x_mean = Vector::Zero(X.cols());
        d.X = DesignMatrix(std::move(X));
        d.y = std::move(y);
    }
    return d;
}

Json read_json_file(const std::filesystem::path& path)
{
    const std::string text = read_text(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        // nlohmann reports a byte offset; convert it to line and column.
        const std::size_t off = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        long line = 1;
        long col = 1;
        for (std::size_t i = 0; i < off; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ParseError(line, col, path.string() + ": invalid JSON");
    }
}

void write_json_file(const std::filesystem::path& path, const Json& value)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    f << value.dump(2) << '\n';
}

Json parse_json_argument(const std::string& text)
{
    if (!text.empty() && text.front() == '@') return read_json_file(text.substr(1));
    const std::size_t first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) throw ParseError(1, 1, "empty JSON argument");
    if (text[first] != '{' && text[first] != '[' && std::filesystem::exists(text)) return read_json_file(text);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError(1, static_cast<long>(e.byte), "invalid JSON argument");
    }
}

void require_keys(const Json& object, const std::vector<std::string>& allowed, const std::string& where)
{
    if (!object.is_object()) throw Error(ErrorKind::ConfigError, where + " must be a JSON object");
    for (const auto& item : object.items())
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
            throw Error(ErrorKind::ConfigError, "unknown key '" + item.key() + "' in " + where);
}

SubspacePrior parse_prior(const Json& d, Index p, const std::filesystem::path& base_dir)
{
    require_keys(d, {"basis", "prior", "header"}, "prior");
    const bool header = d.value("header", false);
    if (d.contains("basis") == d.contains("prior"))
        throw Error(ErrorKind::ConfigError, "a prior needs exactly one of 'basis' or 'prior'");
    if (d.contains("basis")) {
        const Matrix Q = load_csv(resolve(base_dir, json_string(d.at("basis"), "basis")), header);
        if (Q.rows() != p)
            throw Error(ErrorKind::ShapeMismatch, "prior basis has " + std::to_string(Q.rows()) + " rows, expected "
                                                      + std::to_string(p));
        return orthonormal_projector(Q);
    }
    return named_prior(json_string(d.at("prior"), "prior"), GridSpec::equally_spaced(p));
}

PenaltyOperator parse_penalty(const Json& d, const DesignMatrix& X, const std::filesystem::path& base_dir)
{
    if (!d.is_object() || !d.contains("kind")) throw Error(ErrorKind::ConfigError, "penalty needs a 'kind'");
    const std::string kind = json_string(d.at("kind"), "penalty kind");
    const Index p = X.p();
    if (kind == "identity") {
        require_keys(d, {"kind"}, "identity penalty");
        return identity_penalty(p);
    }
    if (kind == "derivative") {
        require_keys(d, {"kind", "order", "shift"}, "derivative penalty");
        const Json order = d.value("order", Json(2));
        if (!order.is_number_integer()) throw Error(ErrorKind::ConfigError, "order must be an integer");
        return derivative_penalty(p, order.get<int>(), json_number(d.value("shift", Json(0.0)), "shift"));
    }
    if (kind == "projection") {
        require_keys(d, {"kind", "a", "b", "basis", "prior", "header"}, "projection penalty");
        Json prior = Json::object();
        for (const char* k : {"basis", "prior", "header"})
            if (d.contains(k)) prior[k] = d.at(k);
        return projection_penalty(parse_prior(prior, p, base_dir), json_number(d.value("a", Json(1.0)), "a"),
                                  json_number(d.value("b", Json(0.0)), "b"));
    }
    if (kind == "multispace") {
        require_keys(d, {"kind", "components", "weights"}, "multispace penalty");
        if (!d.contains("components") || !d.at("components").is_array())
            throw Error(ErrorKind::ConfigError, "multispace penalty needs a 'components' array");
        std::vector<Matrix> projectors;
        for (const Json& c : d.at("components")) projectors.push_back(parse_prior(c, p, base_dir).projector);
        return multispace_penalty(projectors, json_numbers(d.value("weights", Json::array()), "weights"));
    }
    if (kind == "goutis") {
        require_keys(d, {"kind"}, "goutis penalty");
        return goutis_penalty(p);
    }
    if (kind == "stein") {
        require_keys(d, {"kind"}, "stein penalty");
        return stein_penalty(X);
    }
    if (kind == "custom") {
        require_keys(d, {"kind", "matrix", "header"}, "custom penalty");
        Matrix L = load_csv(resolve(base_dir, json_string(d.at("matrix"), "matrix")), d.value("header", false));
        if (L.cols() != p) throw Error(ErrorKind::ShapeMismatch, "penalty matrix must have p columns");
        return PenaltyOperator(std::move(L), PenaltyKind::Custom);
    }
    throw Error(ErrorKind::ConfigError, "unknown penalty kind '" + kind + "'");
}

namespace {

MethodConfig parse_method(const Json& m)
{
    require_keys(m, {"name", "kind", "prior", "a_grid", "product_const", "tuning"}, "method");
    MethodConfig out;
    out.kind = parse_method_kind(json_string(m.at("kind"), "method kind"));
    out.name = m.contains("name") ? json_string(m.at("name"), "method name") : std::string(to_string(out.kind));
    if (m.contains("prior")) out.prior = json_string(m.at("prior"), "prior");
    if (m.contains("a_grid")) out.a_grid = json_numbers(m.at("a_grid"), "a_grid");
    if (m.contains("product_const")) out.product_const = json_number(m.at("product_const"), "product_const");
    if (m.contains("tuning")) {
        const std::string t = json_string(m.at("tuning"), "tuning");
        if (t == "oracle") out.tuning = TuningRule::Oracle;
        else if (t == "reml") out.tuning = TuningRule::Reml;
        else throw Error(ErrorKind::ConfigError, "tuning must be 'oracle' or 'reml'");
    }
    if (out.kind == MethodKind::Projection && out.prior.empty())
        throw Error(ErrorKind::ConfigError, "projection method '" + out.name + "' needs a prior");
    if ((out.kind == MethodKind::Projection || out.kind == MethodKind::D2Shift) && out.a_grid.empty())
        out.a_grid = out.kind == MethodKind::Projection ? std::vector<double>{1.0} : std::vector<double>{0.0};
    return out;
}

}  // namespace

SimulationSpec parse_simulation_spec(const Json& v)
{
    require_keys(v,
                 {"scenario", "n", "p", "r2_target", "r2_targets", "snr_target", "snr_targets", "replicates",
                  "master_seed", "methods", "alpha_grid", "a_distribution", "template_seed", "mixtures",
                  "partial_sums"},
                 "simulation spec");
    if (!v.contains("scenario")) throw Error(ErrorKind::ConfigError, "simulation spec needs a 'scenario'");
    SimulationSpec s = default_spec(parse_scenario(json_string(v.at("scenario"), "scenario")));
    auto integer = [&](const char* key, Index& target) {
        if (!v.contains(key)) return;
        if (!v.at(key).is_number_integer()) throw Error(ErrorKind::ConfigError, std::string(key) + " must be an integer");
        target = v.at(key).get<Index>();
    };
    integer("n", s.n);
    integer("p", s.p);
    integer("replicates", s.replicates);
    if (v.contains("r2_target") && v.contains("r2_targets"))
        throw Error(ErrorKind::ConfigError, "give either r2_target or r2_targets");
    if (v.contains("r2_target")) s.r2_targets = {json_number(v.at("r2_target"), "r2_target")};
    if (v.contains("r2_targets")) s.r2_targets = json_numbers(v.at("r2_targets"), "r2_targets");
    if (v.contains("snr_target") && v.contains("snr_targets"))
        throw Error(ErrorKind::ConfigError, "give either snr_target or snr_targets");
    if (v.contains("snr_target")) s.snr_targets = {json_snr(v.at("snr_target"))};
    if (v.contains("snr_targets")) {
        if (!v.at("snr_targets").is_array()) throw Error(ErrorKind::ConfigError, "snr_targets must be an array");
        s.snr_targets.clear();
        for (const Json& e : v.at("snr_targets")) s.snr_targets.push_back(json_snr(e));
    }
    if (v.contains("master_seed")) {
        const Json& seed = v.at("master_seed");
        if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0))
            throw Error(ErrorKind::ConfigError, "master_seed must be a nonnegative integer");
        s.master_seed = seed.get<std::uint64_t>();
    }
    if (v.contains("template_seed")) s.template_seed = v.at("template_seed").get<std::uint64_t>();
    if (v.contains("methods")) {
        if (!v.at("methods").is_array()) throw Error(ErrorKind::ConfigError, "methods must be an array");
        s.methods.clear();
        for (const Json& m : v.at("methods")) s.methods.push_back(parse_method(m));
    }
    if (v.contains("alpha_grid")) {
        const Json& g = v.at("alpha_grid");
        if (g.is_object()) {
            require_keys(g, {"log10_min", "log10_max", "count"}, "alpha_grid");
            s.alpha_grid = log_grid(json_number(g.value("log10_min", Json(-8.0)), "log10_min"),
                                    json_number(g.value("log10_max", Json(6.0)), "log10_max"),
                                    g.value("count", Index{57}));
        } else {
            s.alpha_grid = json_numbers(g, "alpha_grid");
        }
    }
    if (v.contains("a_distribution")) {
        const Json& a = v.at("a_distribution");
        require_keys(a, {"low", "high"}, "a_distribution");
        s.bumps.a_low = json_number(a.value("low", Json(0.0)), "low");
        s.bumps.a_high = json_number(a.value("high", Json(1.0)), "high");
        if (!(s.bumps.a_high > s.bumps.a_low)) throw Error(ErrorKind::ConfigError, "a_distribution needs low < high");
    }
    if (v.contains("mixtures")) {
        const Json& m = v.at("mixtures");
        require_keys(m, {"construction_n", "construction_snr", "target_template", "response_scale"}, "mixtures");
        s.mixtures.construction_n = m.value("construction_n", s.mixtures.construction_n);
        s.mixtures.construction_snr = m.value("construction_snr", s.mixtures.construction_snr);
        s.mixtures.target_template = m.value("target_template", s.mixtures.target_template);
        s.mixtures.response_scale = m.value("response_scale", s.mixtures.response_scale);
    }
    if (v.contains("partial_sums")) {
        const Json& ps = v.at("partial_sums");
        require_keys(ps, {"methods", "ks"}, "partial_sums");
        s.partial_sum_methods = ps.value("methods", std::vector<std::string>{});
        s.partial_sum_ks = ps.value("ks", std::vector<Index>{});
    }
    for (const std::string& name : s.partial_sum_methods) {
        const bool found = std::any_of(s.methods.begin(), s.methods.end(),
                                       [&](const MethodConfig& m) { return m.name == name; });
        if (!found) throw Error(ErrorKind::ConfigError, "partial_sums names unknown method '" + name + "'");
    }
    return s;
}

Json to_json(const SimulationSpec& s)
{
    Json methods = Json::array();
    for (const MethodConfig& m : s.methods) {
        Json j{{"name", m.name}, {"kind", std::string(to_string(m.kind))},
               {"tuning", m.tuning == TuningRule::Oracle ? "oracle" : "reml"}};
        if (!m.prior.empty()) j["prior"] = m.prior;
        if (!m.a_grid.empty()) j["a_grid"] = m.a_grid;
        if (m.kind == MethodKind::Projection) j["product_const"] = m.product_const;
        methods.push_back(std::move(j));
    }
    Json snr = Json::array();
    for (double x : s.snr_targets) snr.push_back(std::isinf(x) ? Json("inf") : Json(x));
    return Json{{"scenario", std::string(to_string(s.scenario))},
                {"n", s.n},
                {"p", s.p},
                {"r2_targets", s.r2_targets},
                {"snr_targets", snr},
                {"replicates", s.replicates},
                {"master_seed", s.master_seed},
                {"methods", methods},
                {"alpha_grid", s.alpha_grid},
                {"a_distribution", {{"low", s.bumps.a_low}, {"high", s.bumps.a_high}}},
                {"template_seed", s.template_seed},
                {"mixtures",
                 {{"construction_n", s.mixtures.construction_n},
                  {"construction_snr", s.mixtures.construction_snr},
                  {"target_template", s.mixtures.target_template},
                  {"response_scale", s.mixtures.response_scale}}},
                {"partial_sums", {{"methods", s.partial_sum_methods}, {"ks", s.partial_sum_ks}}}};
}

ExperimentConfig parse_experiment_config(const Json& v, const std::filesystem::path& base_dir)
{
    require_keys(v,
                 {"x", "y", "center", "header", "penalty", "alpha", "path", "beta_true", "sigma_eps", "tuning",
                  "out", "seed", "simulation"},
                 "experiment config");
    ExperimentConfig c;
    if (v.contains("x")) c.x_path = resolve(base_dir, json_string(v.at("x"), "x"));
    if (v.contains("y")) c.y_path = resolve(base_dir, json_string(v.at("y"), "y"));
    c.center = v.value("center", false);
    c.header = v.value("header", false);
    if (v.contains("penalty")) c.penalty = v.at("penalty");
    if (v.contains("alpha")) c.alpha = json_number(v.at("alpha"), "alpha");
    if (v.contains("path")) c.path = json_string(v.at("path"), "path");
    if (v.contains("beta_true")) c.beta_true_path = resolve(base_dir, json_string(v.at("beta_true"), "beta_true"));
    if (v.contains("sigma_eps")) c.sigma_eps = json_number(v.at("sigma_eps"), "sigma_eps");
    if (v.contains("tuning")) {
        const Json& t = v.at("tuning");
        require_keys(t, {"method", "grid", "alphas", "const", "criterion", "prior"}, "tuning");
        if (t.contains("method")) c.tuning_method = json_string(t.at("method"), "tuning method");
        if (t.contains("grid")) c.grid = json_numbers(t.at("grid"), "grid");
        if (t.contains("alphas")) c.alphas = json_numbers(t.at("alphas"), "alphas");
        if (t.contains("const")) c.product_const = json_number(t.at("const"), "const");
        if (t.contains("criterion")) c.criterion = json_string(t.at("criterion"), "criterion");
        if (t.contains("prior")) c.prior = t.at("prior");
    }
    if (v.contains("out")) c.out_dir = json_string(v.at("out"), "out");
    if (v.contains("seed")) c.seed = v.at("seed").get<std::uint64_t>();
    if (v.contains("simulation")) c.simulation = parse_simulation_spec(v.at("simulation"));
    return c;
}

}  // namespace peer
