#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmpgeo/chart.hpp"
#include "cmpgeo/model_surface.hpp"

namespace cmpgeo::experiment {

inline constexpr const char* kToolVersion = "cmpgeo 1.0.0";
inline constexpr int kCsvSchema = 1;

const std::vector<std::string>& experiment_kinds();

// Flat `key = value` records, '#' starts a comment:
//   name, kind, seed
//   surface.family / surface.base_family / surface.T_max / surface.t_min / surface.param.<k>
//   chart.family / chart.dim / chart.lo / chart.hi / chart.param.<k>
//   chart.surface.*  (model behind a warped_polar chart, same keys as surface.*)
//   param.<k>        numbers, comma separated lists or words
//   tolerance.<k>    numbers
struct Scenario {
    std::string name;
    std::string kind;
    std::uint64_t seed = 0;
    std::optional<model::SurfaceSpec> surface;
    std::optional<finsler::ChartSpec> chart;
    std::map<std::string, std::string> params;
    std::map<std::string, double> tolerances;

    bool has(const std::string& key) const { return params.count(key) > 0; }
    double num(const std::string& key) const;
    double num(const std::string& key, double fallback) const;
    std::vector<double> list(const std::string& key) const;
    std::string word(const std::string& key, const std::string& fallback = "") const;
    double tolerance(const std::string& key) const;
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);
// Canonical text; parse_scenario(to_text(s)) reproduces s.
std::string to_text(const Scenario& s);

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

// "# cmpgeo-csv v<schema> table=<name>" followed by the column line.
std::string to_csv(const Table& t);
std::string fmt(double v);

struct Check {
    std::string name;
    double value = 0.0;
    std::string relation;  // "<=", ">=", "=="
    double target = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string detail;
};

struct RunReport {
    Scenario scenario;
    std::vector<Check> checks;
    std::vector<Table> tables;
    nlohmann::json details = nlohmann::json::object();
    std::vector<std::string> errors;  // per-item failures that did not abort the run
    bool passed = false;
    double wall_seconds = 0.0;
    std::string version = kToolVersion;
    double tolerance_scale = 1.0;
};

struct RunOptions {
    std::optional<std::uint64_t> seed;
    double tolerance_scale = 1.0;
};

RunReport run(const Scenario& scenario, const RunOptions& opts = {});

nlohmann::json to_json(const RunReport& r);
// report.json plus one CSV per table, under dir
void write_outputs(const RunReport& r, const std::filesystem::path& dir);
// Human-readable summary of a report.json document.
std::string summarize(const nlohmann::json& report);

std::string list_builtins();

} // namespace cmpgeo::experiment
