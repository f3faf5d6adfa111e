#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nsvi/config.hpp"
#include "nsvi/diagnostics.hpp"

namespace nsvi {

/// Names accepted by verify --only.
const std::vector<std::string>& check_names();

struct CommandOptions {
    std::optional<double> index;      ///< run: ladder member (default: largest index)
    std::vector<std::string> only;    ///< verify: subset of check_names()
    int constants_restarts = 3;
};

struct CommandReport {
    bool passed = true;
    std::string summary;  ///< human-readable, one item per line
    std::filesystem::path output_dir;
    std::vector<CheckResult> checks;
    std::string failing_report;  ///< first report file of a failing check
};

/// Single ladder member; writes the timeseries, snapshots and manifest.
CommandReport cmd_run(const SimulationConfig& config, const CommandOptions& opts = {});
/// All ladder members; writes the distance matrix and the ladder validation table.
CommandReport cmd_ladder(const SimulationConfig& config, const CommandOptions& opts = {});
/// Diagnostics suite; passed iff every applicable check passes.
CommandReport cmd_verify(const SimulationConfig& config, const CommandOptions& opts = {});
CommandReport cmd_constants(const SimulationConfig& config, const CommandOptions& opts = {});

/// Check results on in-memory runs, without writing files.
struct VerifyInputs {
    const SimulationConfig& config;
    const ObstacleLadder& ladder;
    std::vector<const TrajectoryRecord*> runs;  ///< one per ladder index, same order
};

CheckResult energy_result(const VerifyInputs& in, double L_P);
CheckResult constraint_result(const VerifyInputs& in);
CheckResult vi_result(const VerifyInputs& in, ViResidualReport* report = nullptr);
CheckResult bv_result(const VerifyInputs& in, const ConstantsReport& constants, BvReport* report = nullptr);
CheckResult perturbation_result(const SimulationConfig& config, const std::vector<const TrajectoryRecord*>& runs);
CheckResult blockage_result(const VerifyInputs& in, BlockageReport* report = nullptr);

}  // namespace nsvi
