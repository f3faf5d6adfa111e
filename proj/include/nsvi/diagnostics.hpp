#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nsvi/config.hpp"
#include "nsvi/grid.hpp"
#include "nsvi/obstacle.hpp"
#include "nsvi/stepper.hpp"

namespace nsvi {

enum class CheckStatus { Pass, Fail, NotApplicable };

const char* to_string(CheckStatus s) noexcept;

/// One line of the verification summary.
struct CheckResult {
    std::string name;
    CheckStatus status = CheckStatus::NotApplicable;
    double worst = 0.0;
    double threshold = 0.0;
    std::string detail;
};

// ---------------------------------------------------------------------------
// Energy
// ---------------------------------------------------------------------------

/// M0 = |u0|^2 + (L_P^2 / nu) * int |g|^2.
double energy_bound(double u0_sq, double nu, double L_P, double g_sq_integral);

struct EnergyLedger {
    std::vector<double> times;
    std::vector<double> lhs;          ///< |u(t_k)|^2 + nu tau sum_{j<=k} |u_j|_{1,2}^2
    std::vector<double> dissipation;  ///< nu tau sum_{j<=k} |u_j|_{1,2}^2
    /// Left minus right of the z = 0 inequality, 1/2 |u_k|^2 + nu tau sum |u_j|_1^2
    /// - tau sum (g, u_j) - 1/2 |u0|^2.
    std::vector<double> work_residual;
    double M0 = 0.0;
    double L_P = 0.0;
    double slack = 0.0;

    double margin(std::size_t k) const { return M0 - lhs[k]; }
    double worst_margin() const;
    bool ok() const { return worst_margin() >= -slack; }
};

EnergyLedger energy_check(const TrajectoryRecord& traj, double nu, double L_P, double slack = 1e-6);

// ---------------------------------------------------------------------------
// Global VI residual
// ---------------------------------------------------------------------------

/**
 * Time-dependent test field v(t) = s(t) v_hat with a smooth scalar profile s, or a
 * discrete path given on the time nodes (derivative by backward differences).
 */
struct TestFunction {
    explicit TestFunction(const MacGrid& grid) : shape(grid) {}

    std::string label;
    VectorField shape;
    std::function<double(double)> profile;
    std::function<double(double)> profile_rate;
    std::vector<VectorField> path;  ///< nonempty for a sampled path
    double margin = 0.0;            ///< delta: the support sits inside {p >= margin}

    VectorField at(int k, double t) const;
    VectorField rate(int k, double t, double tau) const;
};

struct TestFunctionFamily {
    std::vector<TestFunction> members;
};

/// The zero field (always admissible).
TestFunction zero_test_function(const MacGrid& grid);

/// The computed path itself.
TestFunction sampled_test_function(const TrajectoryRecord& traj);

/**
 * Compactly supported vortex bumps placed where the obstacle keeps a margin over the
 * whole horizon, each used with both signs and a smooth time profile. Every member is
 * checked against p on the lattice; DomainError if one is not admissible.
 */
TestFunctionFamily bump_family(const ObstacleField& p, const SamplingLattice& lattice, const CheckSpec& spec);

struct ViResidualRow {
    std::string label;
    double t = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    double residual() const { return lhs - rhs; }
};

struct ViResidualReport {
    std::vector<ViResidualRow> rows;
    double worst = 0.0;
    std::string worst_label;
};

/// Left minus right of the integrated inequality at the checkpoint nodes. Each
/// analytic member is first shrunk onto the ladder member's constraint set.
ViResidualReport global_vi_residual(const TrajectoryRecord& traj, const TestFunctionFamily& family,
                                    const ObstacleLadder& ladder, const LadderMember& member,
                                    const VectorField& u0, const VectorField& g, double nu, int checkpoints);

// ---------------------------------------------------------------------------
// Total variation in the dual norm
// ---------------------------------------------------------------------------

struct BvSurrogates {
    double M0 = 0.0;
    double M1 = 0.0;
    double M2 = 0.0;
    double M3 = 0.0;
    double M_kappa = 0.0;
};

/// M1 = (nu M0)^1/2 + L1 |g|, M2 = 9 L3 nu^-1/2 M0, M3 = M1 L2^1/2 + M2,
/// M_kappa = 2 L0 M0 / kappa + M3 T^1/2.
BvSurrogates bv_bound(const ConstantsReport& c, double M0, double nu, double g_norm_q, double kappa, double T);

struct BvRun {
    double n = 0.0;
    double tv = 0.0;
    std::vector<double> increments;  ///< dual norm of u_{k+1} - u_k for steps in the window
};

struct BvReport {
    std::vector<double> box;  ///< x0, x1, y0, y1
    double t1 = 0.0;
    double t2 = 0.0;
    double kappa = 0.0;
    int window_first = 0;  ///< first step index k (increment u_{k+1} - u_k)
    std::vector<BvRun> runs;
    BvSurrogates bound;
    ConstantsReport constants;

    double max_tv() const;
    bool ok() const { return max_tv() <= bound.M_kappa; }
};

/// Throws DomainError naming offending cells when the subcylinder leaves {p > kappa}.
BvReport bv_estimate(const std::vector<const TrajectoryRecord*>& runs, const ObstacleField& p,
                     const SamplingLattice& lattice, const std::vector<double>& box, double t1, double t2,
                     double kappa, const ConstantsReport& constants, double M0, double nu, double g_norm_q);

/// Total variation of a discrete path between two time nodes.
double path_variation(const std::vector<VectorField>& states, const Subdomain& omega, int k_begin, int k_end);

// ---------------------------------------------------------------------------
// Convection perturbation structure
// ---------------------------------------------------------------------------

struct PerturbationReport {
    double total = 0.0;          ///< (G(v) - G(w), v - w)
    double first_sum = 0.0;      ///< b(v - w, v, v - w)
    double second_sum = 0.0;     ///< b(w, v - w, v - w), zero by skew symmetry
    double identity_error = 0.0; ///< |total - first - second|
    double bound = 0.0;          ///< 9 max|v| |v - w|_{1,2} |v - w|_{0,2}
    bool ok(double tol = 1e-12) const;
};

PerturbationReport perturbation_structure_check(const VectorField& v, const VectorField& w);

// ---------------------------------------------------------------------------
// Blockage
// ---------------------------------------------------------------------------

struct BlockageReport {
    CheckStatus status = CheckStatus::NotApplicable;
    double t0 = 0.0;
    double worst = 0.0;  ///< max |u(t)| over t >= t0 + tau
    double threshold = 0.0;
    std::vector<std::pair<double, double>> decay;  ///< (t, |u(t)|)
};

/// Not applicable without a blockage time or with nonzero forcing.
BlockageReport blockage_check(const TrajectoryRecord& traj, std::optional<double> t0, bool forcing_is_zero,
                              double threshold = 1e-8);

}  // namespace nsvi
