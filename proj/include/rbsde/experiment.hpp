#pragma once

#include "rbsde/common.hpp"
#include "rbsde/isaacs_pde.hpp"
#include "rbsde/problem_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rbsde {

enum class ExperimentKind { solve, penalization, dpp, compare_wu, american_oracle, rbsde_oracle };

const std::vector<std::string>& experiment_names();

struct InstanceConfig {
    std::string name;
    ParamMap params;
    std::optional<std::vector<double>> u_grid;
    std::optional<std::vector<double>> v_grid;
};

struct GridConfig {
    std::vector<std::pair<double, double>> box;
    std::vector<int> nx;
    int nt = 0;  // 0 = smallest CFL-admissible
    BoundaryPolicy boundary = BoundaryPolicy::linear_extrapolation;
};

struct McConfig {
    std::size_t paths = 1;
    int steps = 100;
    std::uint64_t seed = 0;
    int degree = 2;
};

struct ScheduleConfig {
    std::vector<double> m;
    std::vector<double> delta;
    std::vector<int> nx;
};

struct OutputConfig {
    std::filesystem::path directory = "rbsde-out";
    bool csv = true;
    bool json = true;
    int dump_stride = 0;  // 0 = about 50 slices per field
};

/// Parsed and validated experiment configuration. The file format is JSON
/// with the sections experiment, instance, x0, t, grid, mc, schedules and
/// output; unknown keys anywhere are an error.
struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::solve;
    InstanceConfig instance;
    std::optional<std::vector<double>> x0;
    double t = 0;
    std::optional<GridConfig> grid;
    std::optional<McConfig> mc;
    ScheduleConfig schedules;
    OutputConfig output;

    /// Canonical JSON form; the config digest hashes its serialization.
    nlohmann::json canonical() const;
};

/// Parses config text. Errors name the line (syntax) or the field (schema).
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a over the canonical serialization, as 16 hex digits.
std::string config_digest(const ExperimentConfig& config);

/// A schedule-indexed metric, e.g. sup-gap per penalty m.
struct ScheduleMetric {
    std::string parameter;
    std::string metric;
    std::vector<double> parameters;
    std::vector<double> values;
};

struct ResultRecord {
    std::string experiment;
    std::string timestamp;
    std::string config_digest;
    std::map<std::string, double> metrics;
    std::optional<ScheduleMetric> schedule;
    std::vector<std::string> field_files;

    nlohmann::json to_json() const;
};

/// Builds the instance named in a config, applying parameter and grid overrides.
GameInstance make_instance(const ExperimentConfig& config);

/// Resolves the grid of a config against an instance (fills nt from the CFL
/// bound when it is 0).
SpaceTimeGrid make_grid(const ExperimentConfig& config, const GameInstance& instance);

/// Runs the experiment and writes its output directory: config.json,
/// metrics.json, field dumps and convergence tables.
ResultRecord run(const ExperimentConfig& config);

struct ConvergenceText {
    std::string text;
    std::string csv;
};

/// Aligned text and CSV with columns (parameter, metric, ratio to previous).
/// Throws Error if the record has no schedule metric or fewer than two points.
ConvergenceText emit_convergence_table(const ResultRecord& record);

/// Writes a field in the columnar format
///   t_index,flat_node_index,x_0..x_{n-1},value
/// for every `stride`-th slice and the terminal slice.
void write_field_csv(const ValueField& field, const std::filesystem::path& path, int stride);

}  // namespace rbsde
