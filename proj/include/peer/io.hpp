#pragma once

#include "peer/penalties.hpp"
#include "peer/simharness.hpp"
#include "peer/types.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace peer {

using Json = nlohmann::json;

struct CsvTable {
    std::vector<std::string> header;  ///< empty without a header row
    Matrix values;
};

/// Numeric CSV; with `header` the first non-blank line holds column names.
CsvTable read_csv(const std::filesystem::path& path, bool header = false);
CsvTable parse_csv(const std::string& text, bool header = false);
Matrix load_csv(const std::filesystem::path& path, bool header = false);

/// A single column or a single row.
Vector load_vector(const std::filesystem::path& path, bool header = false);

/// Writes 17 significant digits so values round-trip exactly.
void save_csv(const std::filesystem::path& path, const Matrix& values, const std::vector<std::string>& header = {});
void save_vector(const std::filesystem::path& path, const Vector& values, const std::string& name = "");

struct Dataset {
    DesignMatrix X;
    Vector y;
    Vector x_mean;       ///< zero unless centered
    double y_mean = 0.0;
};

/// Loads X (n x p) and y (length n); centering subtracts column and response means.
Dataset load_dataset(const std::filesystem::path& x_path, const std::filesystem::path& y_path, bool center,
                     bool header = false);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& value);

/// Inline JSON text, "@path", or the path of an existing JSON file.
Json parse_json_argument(const std::string& text);

/// Raises ConfigError on keys outside `allowed`.
void require_keys(const Json& object, const std::vector<std::string>& allowed, const std::string& where);

/// Penalty descriptor:
///   {"kind": "identity"}
///   {"kind": "derivative", "order": 0|1|2, "shift": a}
///   {"kind": "projection", "a": a, "b": b, "basis": "q.csv" | "prior": "L_V"|"L_U"|"L_F"|"L_G"}
///   {"kind": "multispace", "components": [{"basis"|"prior": ...}, ...], "weights": [...]}
///   {"kind": "goutis"}, {"kind": "stein"}, {"kind": "custom", "matrix": "l.csv"}
/// Relative paths resolve against `base_dir`.
PenaltyOperator parse_penalty(const Json& descriptor, const DesignMatrix& X,
                              const std::filesystem::path& base_dir = {});

SubspacePrior parse_prior(const Json& descriptor, Index p, const std::filesystem::path& base_dir = {});

SimulationSpec parse_simulation_spec(const Json& value);
Json to_json(const SimulationSpec& spec);

/// Settings shared by the fit, diagnose and tune commands.
struct ExperimentConfig {
    std::filesystem::path x_path;
    std::filesystem::path y_path;
    bool center = false;
    bool header = false;
    Json penalty = Json{{"kind", "identity"}};
    double alpha = 1.0;
    std::string path = "gsvd";
    std::optional<std::filesystem::path> beta_true_path;
    double sigma_eps = 1.0;
    std::string tuning_method = "reml";
    std::vector<double> grid;      ///< a values for the grid search
    std::vector<double> alphas;    ///< alpha values for the grid search
    double product_const = 1.0;
    std::string criterion = "mse_oracle";
    Json prior;
    std::filesystem::path out_dir = ".";
    std::uint64_t seed = 0;
    std::optional<SimulationSpec> simulation;
};

ExperimentConfig parse_experiment_config(const Json& value, const std::filesystem::path& base_dir = {});

}  // namespace peer
