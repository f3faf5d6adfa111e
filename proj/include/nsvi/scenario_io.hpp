#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nsvi/config.hpp"
#include "nsvi/diagnostics.hpp"
#include "nsvi/stepper.hpp"

namespace nsvi {

/// A value in a scenario file: number, quoted string or array of numbers.
struct ScenarioValue {
    std::variant<double, std::string, std::vector<double>> value;
    int line = 0;  ///< 0 for command-line overrides
};

/**
 * Parsed scenario text, keyed by dotted name ("grid.nx", "obstacle.p_max"). The
 * accepted syntax is a TOML subset: [section] headers, key = value lines, # comments.
 */
struct ScenarioDocument {
    std::string source;
    std::map<std::string, ScenarioValue> entries;
    std::vector<std::string> errors;  ///< syntax problems, with line numbers
};

ScenarioDocument parse_scenario_text(const std::string& text, const std::string& source = "<string>");
/// Throws IoError when the file cannot be read.
ScenarioDocument read_scenario_document(const std::filesystem::path& path);

/// Apply "key=value" with a dotted key. Unquoted non-numeric values are strings.
/// Throws ConfigError on malformed input.
void apply_override(ScenarioDocument& doc, const std::string& assignment);

/// Convert and validate. Throws ConfigError listing every problem found.
SimulationConfig to_config(const ScenarioDocument& doc);
SimulationConfig parse_scenario(const std::filesystem::path& path);

std::string serialize_scenario(const SimulationConfig& config);

/// 64-bit FNV-1a of the serialized configuration, as 16 hex digits.
std::string config_hash(const SimulationConfig& config);

/// Directory for outputs: the configured directory, placed under NSVI_OUTPUT_ROOT when
/// that variable is set and the directory is relative.
std::filesystem::path resolve_output_dir(const SimulationConfig& config);

// ---------------------------------------------------------------------------
// Writers. All throw IoError with the offending path.
// ---------------------------------------------------------------------------

/// Legacy VTK structured points at cell centres: velocity, obstacle radius, speed.
void write_snapshot(const VectorField& u, const std::vector<double>& p_n, double time,
                    const std::filesystem::path& path);

struct VtkHeader {
    std::array<int, 3> dimensions{};
    std::array<double, 3> spacing{};
    std::array<double, 3> origin{};
    int point_count = 0;
    double time = 0.0;
};

VtkHeader read_vtk_header(const std::filesystem::path& path);

void write_timeseries(const TrajectoryRecord& traj, const EnergyLedger& ledger, const std::filesystem::path& path);
void write_ladder_validation(const LadderValidation& v, const std::filesystem::path& path);
void write_distance_matrix(const LadderRun& run, const std::filesystem::path& path);
void write_constants(const ConstantsReport& c, const std::filesystem::path& path);
void write_vi_residuals(const ViResidualReport& r, const std::filesystem::path& path);
void write_bv_report(const BvReport& r, const std::filesystem::path& path);
void write_blockage(const BlockageReport& r, const std::filesystem::path& path);
void write_check_summary_csv(const std::vector<CheckResult>& checks, const std::filesystem::path& path);
void write_check_summary_json(const std::vector<CheckResult>& checks, const std::filesystem::path& path);

struct RunManifest {
    std::string command;
    std::string config_hash;
    std::string version;
    std::optional<std::int64_t> timestamp;  ///< from SOURCE_DATE_EPOCH when set
    std::vector<CheckResult> checks;
    std::vector<std::string> files;  ///< relative to the output directory
};

/// Reads SOURCE_DATE_EPOCH; manifests stay reproducible when it is unset.
std::optional<std::int64_t> manifest_timestamp();
void write_manifest(const RunManifest& m, const std::filesystem::path& path);

}  // namespace nsvi
