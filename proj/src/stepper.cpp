#include "nsvi/stepper.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseLU>

#include "nsvi/fields.hpp"

namespace nsvi {

double TrajectoryRecord::max_violation() const {
    double m = 0.0;
    for (double v : violation) m = std::max(m, v);
    return m;
}

InitialData build_initial_data(const VectorField& u0, const ObstacleLadder& ladder, const LadderMember& member) {
    const SamplingLattice& lat = ladder.lattice;
    if (!(u0.grid() == lat.grid)) throw DomainError("initial data and ladder live on different grids");
    InitialData out{u0, {}};
    const auto support = field_support(u0);
    if (std::none_of(support.begin(), support.end(), [](std::uint8_t s) { return s != 0; })) return out;

    const int nc = lat.num_cells();
    std::vector<ExtReal> p0(ladder.base_samples.begin(), ladder.base_samples.begin() + nc);
    const std::vector<double> pn0 = member.slice(lat, 0);
    const double sup = norm_Linf(u0);
    const double cap = std::max(1.0, sup);
    double margin = cap;
    const Eigen::VectorXd w = reconstruct_cells(u0);
    for (int c = 0; c < nc; ++c) {
        if (!support[c]) continue;
        margin = std::min(margin, p0[c].min_with(cap));
        if (!p0[c].is_infinite() && std::hypot(w[2 * c], w[2 * c + 1]) > p0[c].value() * (1.0 + 1e-12))
            throw ConfigError("initial data exceeds the obstacle p(., 0)");
    }
    if (!(margin > 0))
        throw ConfigError("initial data support must lie inside {p(., 0) > 0} with a positive margin");
    out.shrink.delta_hat = margin;
    out.shrink.M_hat = margin + sup;
    const ShrinkResult r = shrink_test_function(u0, margin, p0, pn0, out.shrink.M_hat);
    out.shrink.delta_n = r.delta_n;
    out.u0n = r.v;
    return out;
}

SamplingLattice make_lattice(const SimulationConfig& config) {
    return SamplingLattice{config.grid.make(), config.time.tau, config.time.steps()};
}

ObstacleLadder make_ladder(const SimulationConfig& config, const std::vector<double>& indices) {
    return build_ladder(config.make_obstacle(), indices, make_lattice(config));
}

namespace {

void record_state(TrajectoryRecord& rec, const VectorField& u, double t, const std::vector<double>& p,
                  const VectorField& g, int iterations, double residual, bool first) {
    rec.times.push_back(t);
    rec.l2.push_back(norm_L2(u));
    rec.h1.push_back(seminorm_H1(u));
    rec.violation.push_back(p.empty() ? 0.0 : std::max(0.0, constraint_violation(u, p)));
    rec.iterations.push_back(iterations);
    rec.residual.push_back(residual);
    rec.work.push_back(first ? 0.0 : inner_L2(g, u));
    rec.g_sq.push_back(first ? 0.0 : inner_L2(g, g));
    rec.states.push_back(u);
}

void mark_snapshots(TrajectoryRecord& rec, int cadence) {
    const int K = rec.steps();
    for (int k = 0; k <= K; ++k)
        if ((cadence > 0 && k % cadence == 0) || k == K) rec.snapshot_steps.push_back(k);
}

void require_valid(const SimulationConfig& config) {
    if (auto problems = config.validate(); !problems.empty()) throw ConfigError(problems);
}

}  // namespace

TrajectoryRecord run(const SimulationConfig& config, const ObstacleLadder& ladder, double n) {
    require_valid(config);
    const MacGrid grid = config.grid.make();
    const SamplingLattice& lat = ladder.lattice;
    if (!(lat.grid == grid) || lat.tau != config.time.tau || lat.steps != config.time.steps())
        throw DomainError("ladder lattice does not match the configuration");
    const LadderMember& member = ladder.member(n);
    const VectorField g = make_field(config.forcing, grid);
    const VectorField u0 = make_field(config.initial, grid);

    auto rec = std::make_shared<TrajectoryRecord>();
    rec->n = n;
    rec->tau = lat.tau;
    rec->u0_l2 = norm_L2(u0);
    const InitialData init = build_initial_data(u0, ladder, member);
    rec->initial = init.shrink;
    record_state(*rec, init.u0n, 0.0, member.slice(lat, 0), g, 0, 0.0, true);

    WarmStart warm;
    for (int k = 0; k < lat.steps; ++k) {
        StepProblem prob{rec->states.back(), member.slice(lat, k + 1), g, config.nu, lat.tau};
        StepSolution sol = [&] {
            try {
                return solve_step(prob, config.tolerances, k > 0 ? &warm : nullptr);
            } catch (const NumericalError& e) {
                throw RunAborted(e, rec);
            }
        }();
        warm = std::move(sol.state);
        record_state(*rec, sol.u, lat.time(k + 1), prob.p_slice, g, sol.iterations,
                     std::max(sol.primal_residual, sol.dual_residual), false);
    }
    mark_snapshots(*rec, config.outputs.cadence);
    return std::move(*rec);
}

TrajectoryRecord run(const SimulationConfig& config, double n) {
    require_valid(config);
    return run(config, make_ladder(config, {n}), n);
}

TrajectoryRecord run_unconstrained(const SimulationConfig& config) {
    require_valid(config);
    const MacGrid g = config.grid.make();
    const int K = config.time.steps();
    const double tau = config.time.tau;
    const VectorField force_field = make_field(config.forcing, g);
    const VectorField u0 = make_field(config.initial, g);
    const int nf = g.num_faces();
    const int nc = g.num_cells();
    const double area = g.cell_area();

    // Divergence matrix (cells x faces); the MAC gradient is its negative transpose.
    std::vector<Triplet> dt;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
            const int c = g.cell_index(i, j);
            if (int f = g.u_index(i + 1, j); f >= 0) dt.emplace_back(c, f, 1.0 / g.h());
            if (int f = g.u_index(i, j); f >= 0) dt.emplace_back(c, f, -1.0 / g.h());
            if (int f = g.v_index(i, j + 1); f >= 0) dt.emplace_back(c, f, 1.0 / g.h());
            if (int f = g.v_index(i, j); f >= 0) dt.emplace_back(c, f, -1.0 / g.h());
        }

    TrajectoryRecord rec;
    rec.n = std::numeric_limits<double>::infinity();
    rec.tau = tau;
    rec.u0_l2 = norm_L2(u0);
    record_state(rec, u0, 0.0, {}, force_field, 0, 0.0, true);

    for (int k = 0; k < K; ++k) {
        const VectorField& u_prev = rec.states.back();
        StepProblem prob{u_prev, std::vector<double>(nc, 1.0), force_field, config.nu, tau};
        const SparseMatrix a = build_step_matrix(prob);
        // Unknowns: faces, then cell pressures 0..nc-2 (the last one is pinned to zero);
        // the last divergence row is redundant and dropped.
        std::vector<Triplet> t;
        for (int r = 0; r < a.outerSize(); ++r)
            for (SparseMatrix::InnerIterator it(a, r); it; ++it) t.emplace_back(r, it.col(), it.value());
        for (const Triplet& d : dt) {
            if (d.row() == nc - 1) continue;
            t.emplace_back(nf + d.row(), d.col(), d.value());
            t.emplace_back(d.col(), nf + d.row(), -area * d.value());
        }
        Eigen::SparseMatrix<double> kkt(nf + nc - 1, nf + nc - 1);
        kkt.setFromTriplets(t.begin(), t.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(kkt);
        if (lu.info() != Eigen::Success) throw InvariantError("velocity-pressure system is singular");
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf + nc - 1);
        rhs.head(nf) = area * (u_prev.dofs() / tau + force_field.dofs());
        const Eigen::VectorXd x = lu.solve(rhs);
        record_state(rec, VectorField(g, x.head(nf)), (k + 1) * tau, {}, force_field, 0, 0.0, false);
    }
    mark_snapshots(rec, config.outputs.cadence);
    return rec;
}

double l2q_distance(const TrajectoryRecord& a, const TrajectoryRecord& b) {
    if (a.states.size() != b.states.size() || a.tau != b.tau) throw DomainError("trajectories are not comparable");
    double s = 0.0;
    for (std::size_t k = 1; k < a.states.size(); ++k) {
        const double d = norm_L2(a.states[k] - b.states[k]);
        s += a.tau * d * d;
    }
    return std::sqrt(s);
}

bool LadderRun::cauchy_nonincreasing() const {
    for (std::size_t i = 1; i < cauchy.size(); ++i)
        if (cauchy[i].second > cauchy[i - 1].second * (1.0 + 1e-9) + 1e-14) return false;
    return true;
}

LadderRun run_ladder(const SimulationConfig& config) {
    require_valid(config);
    if (config.ladder.size() < 2) throw ConfigError("ladder needs >= 2 indices");
    const ObstacleLadder ladder = make_ladder(config, config.ladder);
    LadderRun out;
    out.indices = config.ladder;
    for (double n : config.ladder) out.runs.push_back(run(config, ladder, n));
    const std::size_t m = out.runs.size();
    out.distance.assign(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j)
            out.distance[i][j] = out.distance[j][i] = l2q_distance(out.runs[i], out.runs[j]);
    for (std::size_t i = 0; i + 1 < m; ++i) out.cauchy.emplace_back(out.indices[i], out.distance[i][i + 1]);
    return out;
}

}  // namespace nsvi
