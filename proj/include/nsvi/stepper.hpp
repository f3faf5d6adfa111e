#pragma once

#include <memory>
#include <vector>

#include "nsvi/config.hpp"
#include "nsvi/error.hpp"
#include "nsvi/obstacle.hpp"
#include "nsvi/vi_step.hpp"

namespace nsvi {

struct InitialShrink {
    double delta_hat = 0.0;  ///< support margin of u0 against p(., 0)
    double M_hat = 0.0;
    double delta_n = 0.0;
};

struct InitialData {
    VectorField u0n;
    InitialShrink shrink;
};

/// (1 - delta_n)^+ u0 for ladder member n at t = 0. Throws ConfigError when u0 has no
/// positive support margin or exceeds p(., 0).
InitialData build_initial_data(const VectorField& u0, const ObstacleLadder& ladder, const LadderMember& member);

struct TrajectoryRecord {
    double n = 0.0;
    double tau = 0.0;
    std::vector<double> times;
    std::vector<VectorField> states;  ///< one per time node, k = 0..K
    std::vector<double> l2;
    std::vector<double> h1;
    std::vector<double> violation;
    std::vector<int> iterations;
    std::vector<double> residual;
    std::vector<double> work;     ///< (g_k, u_k); 0 at k = 0
    std::vector<double> g_sq;     ///< |g_k|^2; 0 at k = 0
    double u0_l2 = 0.0;           ///< |u0| before the initial shrink
    InitialShrink initial;
    std::vector<int> snapshot_steps;

    int steps() const noexcept { return static_cast<int>(states.size()) - 1; }
    double max_violation() const;
};

/// Thrown when a step fails; carries the trajectory computed so far.
class RunAborted : public NumericalError {
public:
    RunAborted(const NumericalError& cause, std::shared_ptr<TrajectoryRecord> partial)
        : NumericalError(cause.what(), cause.residuals()), partial_(std::move(partial)) {}
    const TrajectoryRecord& partial() const noexcept { return *partial_; }

private:
    std::shared_ptr<TrajectoryRecord> partial_;
};

SamplingLattice make_lattice(const SimulationConfig& config);
ObstacleLadder make_ladder(const SimulationConfig& config, const std::vector<double>& indices);

/// Implicit Euler march of the approximate problem for ladder member n.
TrajectoryRecord run(const SimulationConfig& config, const ObstacleLadder& ladder, double n);
TrajectoryRecord run(const SimulationConfig& config, double n);

/// The same discretisation without the obstacle: each step solves the velocity-pressure
/// saddle-point system directly.
TrajectoryRecord run_unconstrained(const SimulationConfig& config);

/// Discrete L2(Q) distance, right-endpoint rule over k = 1..K.
double l2q_distance(const TrajectoryRecord& a, const TrajectoryRecord& b);

struct LadderRun {
    std::vector<double> indices;
    std::vector<TrajectoryRecord> runs;
    std::vector<std::vector<double>> distance;  ///< D(n_i, n_j)
    /// D(n, 2n) for consecutive index pairs with ratio 2.
    std::vector<std::pair<double, double>> cauchy;
    bool cauchy_nonincreasing() const;
};

LadderRun run_ladder(const SimulationConfig& config);

}  // namespace nsvi
