#pragma once

#include <string>
#include <vector>

#include "nsvi/fields.hpp"
#include "nsvi/obstacle.hpp"
#include "nsvi/vi_step.hpp"

namespace nsvi {

struct GridSpec {
    int nx = 32;
    int ny = 32;
    double lx = 1.0;
    double ly = 1.0;

    bool operator==(const GridSpec&) const = default;
    MacGrid make() const { return MacGrid(nx, ny, lx, ly); }
};

struct TimeSpec {
    double tau = 1.0 / 64;
    double t_final = 0.5;

    bool operator==(const TimeSpec&) const = default;
    /// Number of steps K with K tau = t_final.
    int steps() const;
};

struct ObstacleSpec {
    std::string preset = "free-flow";
    ParamMap params;

    bool operator==(const ObstacleSpec&) const = default;
};

struct OutputSpec {
    int cadence = 0;  ///< snapshot every `cadence` steps; 0 writes only the final state
    std::string directory = "out";

    bool operator==(const OutputSpec&) const = default;
};

/// Thresholds and parameters of the verification checks.
struct CheckSpec {
    double energy_slack = 1e-6;
    double constraint_slack = 1e-8;
    double vi_slack = 1e-3;
    double blockage_threshold = 1e-8;
    double bv_kappa = 0.5;
    std::vector<double> bv_box = {0.0, 1.0, 0.0, 1.0};  ///< x0, x1, y0, y1 of the subdomain
    std::vector<double> bv_window = {0.0, 1.0};         ///< [T1, T1'] (clipped to the horizon)
    int family_bumps = 4;           ///< number of +/- bump pairs in the test family
    double family_radius = 0.1;     ///< bump radius
    double family_amplitude = 0.5;  ///< peak speed of a bump relative to the local obstacle
    int vi_checkpoints = 4;

    bool operator==(const CheckSpec&) const = default;
};

struct SimulationConfig {
    GridSpec grid;
    TimeSpec time;
    double nu = 0.1;
    ObstacleSpec obstacle;
    std::vector<double> ladder = {4, 8};
    FieldSpec forcing;
    FieldSpec initial;
    OutputSpec outputs;
    SplitParams tolerances;
    CheckSpec checks;

    bool operator==(const SimulationConfig&) const = default;

    /// All problems found; empty when the configuration is valid.
    std::vector<std::string> validate() const;
    ObstacleField make_obstacle() const;
};

}  // namespace nsvi
