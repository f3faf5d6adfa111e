#pragma once

#include <array>
#include <optional>
#include <vector>

#include "nsvi/grid.hpp"
#include "nsvi/obstacle.hpp"

namespace nsvi {

/// One implicit step: find u with div u = 0, |u| <= p_slice at cell centres, and
///   ((u - u_prev)/tau, u - z) + nu <u, u - z> + b(u_prev, u, u - z) <= (g, u - z)
/// for every admissible z.
struct StepProblem {
    VectorField u_prev;
    std::vector<double> p_slice;  ///< per-cell radius
    VectorField g_slice;
    double nu = 1.0;
    double tau = 1.0;
};

struct SplitParams {
    double rho = 0.0;  ///< penalty; 0 selects 1/tau
    int max_iter = 20000;
    double feas_tol = 1e-8;
    double kkt_tol = 1e-7;
    double relaxation = 1.8;

    bool operator==(const SplitParams&) const = default;
};

/// Splitting state carried between consecutive steps.
struct WarmStart {
    Eigen::VectorXd mu;  ///< constraint force per unit area, two entries per cell
};

struct StepSolution {
    VectorField u;
    ScalarField pressure;
    std::vector<double> radial_multiplier;  ///< per cell, >= 0
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double constraint_violation = 0.0;  ///< max (|u| - p)^+ over cells
    bool unconstrained = false;         ///< the free minimiser was already admissible
    WarmStart state;
};

std::array<double, 2> ball_project(std::array<double, 2> vec, double radius);

/// Max over cells of (|u_c| - p_c)^+ with u_c the reconstructed cell vector.
double constraint_violation(const VectorField& u, const std::vector<double>& p_slice);

/**
 * Solve one step in stream-function coordinates, so the divergence constraint is built
 * in. Semismooth Newton on the optimality system runs first, from the previous step's
 * multiplier. If it stalls, over-relaxed ADMM (factorised linear block, cellwise ball
 * projection) finds the active set and Newton polishes. Throws NumericalError with
 * residuals when max_iter is exceeded.
 */
StepSolution solve_step(const StepProblem& prob, const SplitParams& params, const WarmStart* warm = nullptr);

enum class ConvectionForm { Linearized, Nonlinear };

/// Max over probes of LHS - RHS of the step inequality. Probes must be admissible
/// (div z <= feas_tol, |z| <= p_slice + feas_tol) or DomainError is thrown.
double step_vi_residual(const VectorField& u, const StepProblem& prob, const std::vector<VectorField>& probes,
                        double feas_tol = 1e-8, ConvectionForm form = ConvectionForm::Linearized);

/// Weighted step matrix A = (h^2/tau) I + nu K + C(u_prev), C the skew convection part.
SparseMatrix build_step_matrix(const StepProblem& prob);

struct ShiftResult {
    VectorField z;
    double factor = 1.0;  ///< 1 - sup|p_s - p_t| / mu
    double sup_shift = 0.0;
};

/// Scale z admissible for p_s into one admissible for p_t. Requires sup|p_s - p_t| < mu.
ShiftResult shift_constraint_set(const VectorField& z, const std::vector<double>& p_s, const std::vector<double>& p_t,
                                 double mu);

struct ShiftChainResult {
    VectorField z;
    int chain_length = 0;  ///< number of single-interval shifts used
};

/// Carry z from time node ks to kt of a ladder member, cutting [ks, kt] into the
/// fewest pieces whose obstacle change stays below min_value.
ShiftChainResult shift_across(const VectorField& z, const LadderMember& member, const SamplingLattice& lattice,
                              int ks, int kt);

/// Cells touched by a nonzero face of v.
std::vector<std::uint8_t> field_support(const VectorField& v);

/// delta_n = max over support of |min(p, M) - min(p_n, M)| / delta.
double shrink_delta(const std::vector<ExtReal>& p, const std::vector<double>& p_n,
                    const std::vector<std::uint8_t>& support, double delta, double M);

struct ShrinkResult {
    double delta_n = 0.0;
    VectorField v;
};

/// (1 - delta_n)^+ v with M = delta + sup|v| unless given. Throws DomainError when v
/// exceeds p or its support leaves {p >= delta}.
ShrinkResult shrink_test_function(const VectorField& v, double delta, const std::vector<ExtReal>& p,
                                  const std::vector<double>& p_n, std::optional<double> M = std::nullopt);

}  // namespace nsvi
