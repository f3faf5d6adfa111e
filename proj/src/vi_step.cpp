#include "nsvi/vi_step.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/SparseLU>

#include "nsvi/error.hpp"

namespace nsvi {

namespace {

using ColSparse = Eigen::SparseMatrix<double>;

void check_problem(const StepProblem& prob) {
    const MacGrid& g = prob.u_prev.grid();
    if (!(prob.g_slice.grid() == g)) throw DomainError("forcing and velocity live on different grids");
    if (static_cast<int>(prob.p_slice.size()) != g.num_cells()) throw DomainError("p_slice size does not match the grid");
    if (!(prob.tau > 0) || !(prob.nu > 0)) throw DomainError("step needs tau > 0 and nu > 0");
    for (double p : prob.p_slice)
        if (!(p > 0) || !std::isfinite(p)) throw DomainError("p_slice must be finite and > 0");
}

constexpr int kBalanceEvery = 25;
constexpr int kMaxRebalances = 40;
constexpr double kBalanceRatio = 10.0;
constexpr int kNewtonMaxIter = 30;
// ADMM tolerance, relative to the velocity scale, before handing over to Newton.
constexpr double kWarmupTol = 1e-3;
constexpr double kNewtonTol = 1e-11;
// Newton keeps going below the feasibility threshold by this factor. Cell averages do not
// see checkerboard face modes, so stopping right at the threshold can leave them in u.
constexpr double kPolishFactor = 1e-3;
// Diagonal shift on the multiplier block. With p near zero the active rows reduce to
// B d psi = f2, which has more rows than unknowns and no unique multiplier.
constexpr double kJacobianShift = 1e-8;
constexpr int kFullSteps = 8;
constexpr std::size_t kMeritMemory = 5;

double cell_norm(const Eigen::VectorXd& x, Eigen::Index c) { return std::hypot(x[2 * c], x[2 * c + 1]); }

}  // namespace

std::array<double, 2> ball_project(std::array<double, 2> vec, double radius) {
    if (!(radius >= 0)) throw DomainError("ball radius must be >= 0");
    const double n = std::hypot(vec[0], vec[1]);
    if (n <= radius) return vec;
    const double s = radius / n;
    return {vec[0] * s, vec[1] * s};
}

double constraint_violation(const VectorField& u, const std::vector<double>& p_slice) {
    const Eigen::VectorXd w = reconstruct_cells(u);
    double worst = 0.0;
    for (Eigen::Index c = 0; c < w.size() / 2; ++c) worst = std::max(worst, cell_norm(w, c) - p_slice[c]);
    return worst;
}

SparseMatrix build_step_matrix(const StepProblem& prob) {
    const MacGrid& g = prob.u_prev.grid();
    const SparseMatrix adv = build_advection(prob.u_prev);
    const SparseMatrix skew = 0.5 * (adv - SparseMatrix(adv.transpose()));
    SparseMatrix id(g.num_faces(), g.num_faces());
    id.setIdentity();
    SparseMatrix a = (g.cell_area() / prob.tau) * id + prob.nu * build_stiffness(g) + skew;
    a.makeCompressed();
    return a;
}

namespace {

/// Data shared by both inner solvers, in stream-function coordinates.
struct StepSystem {
    const StepProblem& prob;
    int nc;
    double area;
    SparseMatrix curl;
    SparseMatrix rec;
    SparseMatrix a;
    Eigen::VectorXd force;
    ColSparse m;     ///< C^T A C
    ColSparse bt;    ///< (R C)^T
    SparseMatrix b;  ///< R C
    ColSparse btb;
    Eigen::VectorXd f;  ///< C^T F

    void project(const Eigen::VectorXd& y, Eigen::VectorXd& out) const {
        for (int c = 0; c < nc; ++c) {
            const auto p = ball_project({y[2 * c], y[2 * c + 1]}, prob.p_slice[c]);
            out[2 * c] = p[0];
            out[2 * c + 1] = p[1];
        }
    }
};

struct InnerResult {
    bool converged = false;
    int iterations = 0;
    double primal = 0.0;
    double dual = 0.0;
    Eigen::VectorXd psi;
    Eigen::VectorXd mu;  ///< constraint force per unit area, two entries per cell
};

double max_cell_norm(const Eigen::VectorXd& x) {
    double m = 0.0;
    for (Eigen::Index c = 0; c < x.size() / 2; ++c) m = std::max(m, cell_norm(x, c));
    return m;
}

/**
 * Semismooth Newton on the joint optimality system in (psi, mu):
 *   M psi - f + h^2 B^T mu = 0,   mu - c (y - P(y)) = 0,   y = B psi + mu / c,
 * the second equation being the projection form of mu in the normal cone of the ball
 * at B psi. Globalised by backtracking on the residual norm; returns unconverged when
 * that stalls so the caller can fall back to ADMM.
 */
InnerResult newton_kkt(const StepSystem& sys, Eigen::VectorXd psi, Eigen::VectorXd mu, double threshold, double c,
                       int max_iter) {
    InnerResult out;
    const int nc = sys.nc;
    const int np = static_cast<int>(psi.size());
    const double fscale = std::max(1e-300, sys.f.cwiseAbs().maxCoeff());
    double bnorm = 0.0;
    for (int k = 0; k < sys.bt.outerSize(); ++k)
        for (ColSparse::InnerIterator e(sys.bt, k); e; ++e) bnorm = std::max(bnorm, std::abs(e.value()));
    // Stationarity rows are scaled so both blocks carry velocity units.
    const double srow = 1.0 / (sys.area * c);

    Eigen::VectorXd y(2 * nc);
    Eigen::VectorXd py(2 * nc);
    Eigen::VectorXd f1(np);
    Eigen::VectorXd f2(2 * nc);
    // Stationarity relative to the largest term of the force balance; the multiplier can
    // be large along directions B^T does not see.
    auto stationarity = [&](const Eigen::VectorXd& ps, const Eigen::VectorXd& m) {
        const double scale = std::max({fscale, (sys.m * ps).cwiseAbs().maxCoeff(),
                                       sys.area * bnorm * m.cwiseAbs().maxCoeff()});
        return f1.cwiseAbs().maxCoeff() / scale;
    };
    auto evaluate = [&](const Eigen::VectorXd& ps, const Eigen::VectorXd& m) {
        f1 = sys.m * ps - sys.f + sys.area * (sys.bt * m);
        y = sys.b * ps + m / c;
        sys.project(y, py);
        f2 = m / c - (y - py);
        return std::sqrt((srow * f1).squaredNorm() + f2.squaredNorm());
    };

    std::vector<Triplet> fixed;
    for (int k = 0; k < sys.m.outerSize(); ++k)
        for (ColSparse::InnerIterator it(sys.m, k); it; ++it) fixed.emplace_back(it.row(), it.col(), srow * it.value());

    Eigen::SparseLU<ColSparse> lu;
    double merit = evaluate(psi, mu);
    std::vector<double> history{merit};
    std::vector<int> slot(nc, -1);
    int it = 0;
    while (it < max_iter) {
        const double primal = max_cell_norm(f2);
        const double stat = stationarity(psi, mu);
        out.primal = primal;
        out.dual = stat;
        if (primal <= kPolishFactor * threshold && stat <= kNewtonTol) {
            out.converged = true;
            break;
        }
        ++it;
        // Linearised second block: J d mu / c - (I - J) B d psi = f2. For cells with y inside
        // the ball J = I and d mu = c f2 is eliminated; the rest stay as unknowns.
        Eigen::VectorXd rhs_mu = Eigen::VectorXd::Zero(2 * nc);
        int na = 0;
        for (int cidx = 0; cidx < nc; ++cidx) {
            if (cell_norm(y, cidx) <= sys.prob.p_slice[cidx]) {
                slot[cidx] = -1;
                rhs_mu[2 * cidx] = c * f2[2 * cidx];
                rhs_mu[2 * cidx + 1] = c * f2[2 * cidx + 1];
            } else {
                slot[cidx] = na++;
            }
        }
        const int dim = np + 2 * na;
        std::vector<Triplet> t = fixed;
        for (int k = 0; k < sys.bt.outerSize(); ++k) {
            const int cidx = k / 2;
            if (slot[cidx] < 0) continue;
            const int col = np + 2 * slot[cidx] + (k % 2);
            for (ColSparse::InnerIterator e(sys.bt, k); e; ++e) t.emplace_back(e.row(), col, srow * sys.area * e.value());
        }
        Eigen::VectorXd rhs(dim);
        rhs.head(np) = srow * (f1 - sys.area * (sys.bt * rhs_mu));
        for (int cidx = 0; cidx < nc; ++cidx) {
            if (slot[cidx] < 0) continue;
            const double ny = cell_norm(y, cidx);
            const double sc = sys.prob.p_slice[cidx] / ny;
            const double e0 = y[2 * cidx] / ny;
            const double e1 = y[2 * cidx + 1] / ny;
            const double jm[2][2] = {{sc * (1 - e0 * e0), -sc * e0 * e1}, {-sc * e0 * e1, sc * (1 - e1 * e1)}};
            const int r0 = np + 2 * slot[cidx];
            for (int q = 0; q < 2; ++q) {
                for (int l = 0; l < 2; ++l) t.emplace_back(r0 + q, r0 + l, (jm[q][l] + (q == l ? kJacobianShift : 0.0)) / c);
                // -(I - J) B row
                for (int l = 0; l < 2; ++l) {
                    const double coef = -((q == l ? 1.0 : 0.0) - jm[q][l]);
                    if (coef == 0.0) continue;
                    for (SparseMatrix::InnerIterator e(sys.b, 2 * cidx + l); e; ++e)
                        t.emplace_back(r0 + q, e.col(), coef * e.value());
                }
                rhs[r0 + q] = f2[2 * cidx + q];
            }
        }
        ColSparse jac(dim, dim);
        jac.setFromTriplets(t.begin(), t.end());
        lu.analyzePattern(jac);
        lu.factorize(jac);
        if (lu.info() != Eigen::Success) break;
        const Eigen::VectorXd sol = lu.solve(rhs);
        if (!sol.allFinite()) break;
        Eigen::VectorXd step(np + 2 * nc);
        step.head(np) = sol.head(np);
        for (int cidx = 0; cidx < nc; ++cidx) {
            if (slot[cidx] < 0) {
                step[np + 2 * cidx] = rhs_mu[2 * cidx];
                step[np + 2 * cidx + 1] = rhs_mu[2 * cidx + 1];
            } else {
                step[np + 2 * cidx] = sol[np + 2 * slot[cidx]];
                step[np + 2 * cidx + 1] = sol[np + 2 * slot[cidx] + 1];
            }
        }

        double len = 1.0;
        bool accepted = false;
        for (int k = 0; k < 30; ++k) {
            const Eigen::VectorXd ps = psi - len * step.head(np);
            const Eigen::VectorXd m = mu - len * step.tail(2 * nc);
            const double mt = evaluate(ps, m);
            // Full steps are taken unconditionally at first, as in a primal-dual active set
            // method; afterwards the reference value is the worst of the recent merits.
            const double ref = *std::max_element(history.begin(), history.end());
            if (it <= kFullSteps || mt <= (1.0 - 1e-4 * len) * ref || mt <= threshold * 1e-3) {
                psi = ps;
                mu = m;
                merit = mt;
                history.push_back(mt);
                if (history.size() > kMeritMemory) history.erase(history.begin());
                accepted = true;
                break;
            }
            len *= 0.5;
        }
        if (!accepted) {
            evaluate(psi, mu);
            break;
        }
    }
    if (!out.converged) {
        out.primal = max_cell_norm(f2);
        out.dual = stationarity(psi, mu);
        out.converged = out.primal <= threshold && out.dual <= kNewtonTol;
    }
    out.iterations = it;
    out.psi = std::move(psi);
    out.mu = std::move(mu);
    return out;
}

/// Over-relaxed scaled ADMM with residual balancing.
InnerResult admm(const StepSystem& sys, const Eigen::VectorXd& psi0, const Eigen::VectorXd& mu0, double rho,
                 const SplitParams& params, double threshold, int max_iter) {
    InnerResult out;
    const int nc = sys.nc;
    Eigen::SparseLU<ColSparse> lu;
    lu.analyzePattern(ColSparse(sys.m + sys.btb));
    auto factor = [&] {
        lu.factorize(ColSparse(sys.m + (rho * sys.area) * sys.btb));
        if (lu.info() != Eigen::Success) throw InvariantError("penalised step operator is singular");
    };
    factor();

    Eigen::VectorXd x = sys.b * psi0;
    Eigen::VectorXd w(2 * nc);
    sys.project(x, w);
    Eigen::VectorXd lambda = mu0 / rho;
    Eigen::VectorXd psi = psi0;
    Eigen::VectorXd w_old(2 * nc);
    const double alpha = params.relaxation;
    int rebalances = 0;
    for (int it = 1; it <= max_iter; ++it) {
        psi = lu.solve(Eigen::VectorXd(sys.f + (rho * sys.area) * (sys.bt * (w - lambda))));
        x = sys.b * psi;
        const Eigen::VectorXd xh = alpha * x + (1.0 - alpha) * w;
        w_old = w;
        sys.project(xh + lambda, w);
        lambda += xh - w;
        out.primal = max_cell_norm(x - w);
        out.dual = max_cell_norm(w - w_old);
        out.iterations = it;
        if (out.primal <= threshold && out.dual <= threshold) {
            out.converged = true;
            break;
        }
        // Residual balancing: keep the two residuals within a factor of ten.
        if (it % kBalanceEvery == 0 && rebalances < kMaxRebalances) {
            double scale = 1.0;
            if (out.primal > kBalanceRatio * out.dual) scale = 2.0;
            if (out.dual > kBalanceRatio * out.primal) scale = 0.5;
            if (scale != 1.0) {
                rho *= scale;
                lambda /= scale;
                factor();
                ++rebalances;
            }
        }
    }
    out.psi = std::move(psi);
    out.mu = rho * lambda;
    return out;
}

}  // namespace

StepSolution solve_step(const StepProblem& prob, const SplitParams& params, const WarmStart* warm) {
    check_problem(prob);
    if (!(params.relaxation > 0 && params.relaxation < 2) || params.max_iter < 1 || !(params.feas_tol > 0) ||
        !(params.kkt_tol > 0) || !(params.rho >= 0))
        throw DomainError("invalid splitting parameters");

    const MacGrid& g = prob.u_prev.grid();
    const int nc = g.num_cells();
    const double rho = params.rho > 0 ? params.rho : 1.0 / prob.tau;

    StepSystem sys{prob, nc, g.cell_area(), build_curl(g), build_reconstruction(g), build_step_matrix(prob), {}, {}, {},
                   {}, {}, {}};
    sys.force = sys.area * (prob.u_prev.dofs() / prob.tau + prob.g_slice.dofs());
    const ColSparse ct = ColSparse(sys.curl.transpose());
    sys.m = ct * ColSparse(sys.a * sys.curl);
    sys.f = ct * sys.force;

    StepSolution sol{VectorField(g), ScalarField(g), std::vector<double>(nc, 0.0), 0, 0.0, 0.0, 0.0, false, {}};

    Eigen::SparseLU<ColSparse> free_lu;
    free_lu.compute(sys.m);
    if (free_lu.info() != Eigen::Success) throw InvariantError("step operator is singular");
    Eigen::VectorXd psi = free_lu.solve(sys.f);
    Eigen::VectorXd x = sys.rec * (sys.curl * psi);

    bool feasible = true;
    for (int c = 0; c < nc && feasible; ++c) feasible = cell_norm(x, c) <= prob.p_slice[c];

    Eigen::VectorXd mu = Eigen::VectorXd::Zero(2 * nc);
    if (feasible) {
        sol.unconstrained = true;
    } else {
        sys.b = sys.rec * sys.curl;
        sys.bt = ColSparse(sys.b.transpose());
        sys.btb = sys.bt * ColSparse(sys.b);
        const bool have_warm = warm && warm->mu.size() == 2 * nc && warm->mu.cwiseAbs().maxCoeff() > 0;
        const Eigen::VectorXd mu0 = have_warm ? warm->mu : mu;
        const double threshold = std::min(params.feas_tol, params.kkt_tol / rho);
        int used = 0;

        // Newton from the previous step's multiplier; if it stalls, let ADMM find the
        // active set to a loose tolerance and polish with Newton from there. Plain ADMM
        // to full tolerance is the last resort.
        InnerResult r;
        if (have_warm) {
            r = newton_kkt(sys, psi, mu0, threshold, rho, kNewtonMaxIter);
            used += r.iterations;
        }
        if (!r.converged) {
            const double loose = kWarmupTol * std::max(1.0, max_cell_norm(x));
            InnerResult a = admm(sys, psi, mu0, rho, params, std::max(loose, threshold), params.max_iter);
            used += a.iterations;
            r = newton_kkt(sys, a.psi, a.mu, threshold, rho, kNewtonMaxIter);
            used += r.iterations;
            if (!r.converged) {
                r = admm(sys, a.psi, a.mu, rho, params, threshold, std::max(1, params.max_iter - used));
                used += r.iterations;
            }
        }
        r.iterations = used;
        if (!r.converged) {
            std::ostringstream os;
            os << "step solver did not converge in " << params.max_iter << " iterations";
            throw NumericalError(os.str(),
                                 {{"primal_residual", r.primal}, {"dual_residual", r.dual}, {"threshold", threshold}});
        }
        psi = std::move(r.psi);
        mu = std::move(r.mu);
        sol.iterations = r.iterations;
        sol.primal_residual = r.primal;
        sol.dual_residual = r.dual;
        for (int c = 0; c < nc; ++c) sol.radial_multiplier[c] = cell_norm(mu, c);
    }
    const Eigen::VectorXd u = sys.curl * psi;
    sol.state.mu = mu;
    sol.u = VectorField(g, u);
    sol.constraint_violation = std::max(0.0, constraint_violation(sol.u, prob.p_slice));

    // Pressure from the force balance: h^2 grad(pi) = F - A u - h^2 R^T mu.
    const Eigen::VectorXd resid = (sys.force - sys.a * u) / sys.area - SparseMatrix(sys.rec.transpose()) * mu;
    sol.pressure = solve_pressure_poisson(divergence(VectorField(g, resid)), 1e-12);
    return sol;
}

double step_vi_residual(const VectorField& u, const StepProblem& prob, const std::vector<VectorField>& probes,
                        double feas_tol, ConvectionForm form) {
    check_problem(prob);
    if (probes.empty()) throw DomainError("step_vi_residual needs at least one probe");
    double worst = -std::numeric_limits<double>::infinity();
    for (const VectorField& z : probes) {
        const ScalarField div = divergence(z);
        if (div.values().size() > 0 && div.values().cwiseAbs().maxCoeff() > feas_tol)
            throw DomainError("probe is not divergence-free");
        if (constraint_violation(z, prob.p_slice) > feas_tol) throw DomainError("probe violates the obstacle");
        const VectorField e = u - z;
        const VectorField& a = form == ConvectionForm::Linearized ? prob.u_prev : u;
        const double lhs = inner_L2(u - prob.u_prev, e) / prob.tau + prob.nu * inner_H1(u, e) + convection_form(a, u, e);
        worst = std::max(worst, lhs - inner_L2(prob.g_slice, e));
    }
    return worst;
}

ShiftResult shift_constraint_set(const VectorField& z, const std::vector<double>& p_s, const std::vector<double>& p_t,
                                 double mu) {
    const int nc = z.grid().num_cells();
    if (static_cast<int>(p_s.size()) != nc || static_cast<int>(p_t.size()) != nc)
        throw DomainError("obstacle slices do not match the grid");
    if (!(mu > 0)) throw DomainError("mu must be > 0");
    double sup = 0.0;
    for (int c = 0; c < nc; ++c) sup = std::max(sup, std::abs(p_s[c] - p_t[c]));
    if (sup >= mu) throw DomainError("obstacle change exceeds mu; split the interval");
    if (constraint_violation(z, p_s) > 1e-12 * (1.0 + *std::max_element(p_s.begin(), p_s.end())))
        throw DomainError("z is not admissible for p_s");
    ShiftResult r{z, 1.0 - sup / mu, sup};
    r.z *= r.factor;
    return r;
}

ShiftChainResult shift_across(const VectorField& z, const LadderMember& member, const SamplingLattice& lat, int ks,
                              int kt) {
    if (ks < 0 || kt < 0 || ks > lat.steps || kt > lat.steps) throw DomainError("time node out of range");
    ShiftChainResult out{z, 0};
    const double mu = member.min_value;
    const int dir = kt >= ks ? 1 : -1;
    int cur = ks;
    std::vector<double> p_cur = member.slice(lat, cur);
    while (cur != kt) {
        // Furthest node reachable with a change below mu.
        int next = cur;
        std::vector<double> p_next = p_cur;
        for (int k = cur + dir; k != kt + dir; k += dir) {
            std::vector<double> pk = member.slice(lat, k);
            double sup = 0.0;
            for (std::size_t c = 0; c < pk.size(); ++c) sup = std::max(sup, std::abs(pk[c] - p_cur[c]));
            if (sup >= mu) break;
            next = k;
            p_next = std::move(pk);
        }
        if (next == cur) throw DomainError("obstacle jumps by more than min_value between adjacent time nodes");
        out.z = shift_constraint_set(out.z, p_cur, p_next, mu).z;
        ++out.chain_length;
        cur = next;
        p_cur = std::move(p_next);
    }
    return out;
}

std::vector<std::uint8_t> field_support(const VectorField& v) {
    const MacGrid& g = v.grid();
    std::vector<std::uint8_t> s(g.num_cells(), 0);
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i)
            if (v.u(i, j) != 0.0 || v.u(i + 1, j) != 0.0 || v.v(i, j) != 0.0 || v.v(i, j + 1) != 0.0)
                s[g.cell_index(i, j)] = 1;
    return s;
}

double shrink_delta(const std::vector<ExtReal>& p, const std::vector<double>& p_n,
                    const std::vector<std::uint8_t>& support, double delta, double M) {
    if (p.size() != p_n.size() || p.size() != support.size()) throw DomainError("shrink inputs have mismatched sizes");
    if (!(delta > 0)) throw DomainError("support margin delta must be > 0");
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (support[i]) worst = std::max(worst, std::abs(p[i].min_with(M) - std::min(p_n[i], M)));
    return worst / delta;
}

ShrinkResult shrink_test_function(const VectorField& v, double delta, const std::vector<ExtReal>& p,
                                  const std::vector<double>& p_n, std::optional<double> M) {
    const MacGrid& g = v.grid();
    if (static_cast<int>(p.size()) != g.num_cells() || static_cast<int>(p_n.size()) != g.num_cells())
        throw DomainError("obstacle slices do not match the grid");
    const auto support = field_support(v);
    const Eigen::VectorXd w = reconstruct_cells(v);
    for (int c = 0; c < g.num_cells(); ++c) {
        if (!support[c]) continue;
        if (!p[c].is_infinite()) {
            if (p[c].value() < delta) throw DomainError("support of v leaves {p >= delta}");
            if (cell_norm(w, c) > p[c].value() * (1.0 + 1e-12)) throw DomainError("v exceeds p on its support");
        }
    }
    const double cap = M.value_or(delta + norm_Linf(v));
    ShrinkResult r{shrink_delta(p, p_n, support, delta, cap), v};
    r.v *= std::max(0.0, 1.0 - r.delta_n);
    const double viol = constraint_violation(r.v, p_n);
    if (viol > 1e-12 * (1.0 + norm_Linf(v))) {
        std::ostringstream os;
        os << "shrunk test function violates p_n by " << viol;
        throw InvariantError(os.str());
    }
    return r;
}

}  // namespace nsvi
