// Shared helpers for the test binaries.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "nsvi/config.hpp"
#include "nsvi/grid.hpp"

namespace nsvi::testing {

/// Divergence-free field from a random stream function, scaled to the given peak face value.
inline VectorField random_solenoidal(const MacGrid& g, std::mt19937_64& rng, double amp = 1.0) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd psi(g.num_psi());
    for (auto& x : psi) x = nd(rng);
    VectorField v = curl(g, psi);
    const double m = v.dofs().cwiseAbs().maxCoeff();
    if (m > 0) v *= amp / m;
    return v;
}

/// Arbitrary face values (generally not divergence-free).
inline VectorField random_field(const MacGrid& g, std::mt19937_64& rng, double amp = 1.0) {
    std::uniform_real_distribution<double> ud(-amp, amp);
    VectorField v(g);
    for (auto& x : v.dofs()) x = ud(rng);
    return v;
}

/// Small config used by the stepper and diagnostics tests.
inline SimulationConfig small_config(const std::string& obstacle = "free-flow", int n = 12, double tau = 1.0 / 32,
                                     double t_final = 0.25) {
    SimulationConfig c;
    c.grid = {n, n, 1.0, 1.0};
    c.time = {tau, t_final};
    c.nu = 0.05;
    c.obstacle.preset = obstacle;
    c.ladder = {4, 8};
    c.forcing.preset = "taylor-green";
    c.forcing.params = {{"amplitude", 4.0}};
    c.initial.preset = "none";
    c.outputs.directory = "out/test";
    return c;
}

inline std::string scenario_path(const std::string& name) { return std::string(NSVI_SCENARIO_DIR) + "/" + name; }

}  // namespace nsvi::testing
