#include "nsvi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nsvi/error.hpp"
#include "nsvi/fields.hpp"

namespace nsvi {

const char* to_string(CheckStatus s) noexcept {
    switch (s) {
        case CheckStatus::Pass: return "pass";
        case CheckStatus::Fail: return "fail";
        case CheckStatus::NotApplicable: return "not-applicable";
    }
    return "unknown";
}

double energy_bound(double u0_sq, double nu, double L_P, double g_sq_integral) {
    if (!(nu > 0)) throw DomainError("energy bound needs nu > 0");
    return u0_sq + L_P * L_P / nu * g_sq_integral;
}

double EnergyLedger::worst_margin() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < lhs.size(); ++k) m = std::min(m, margin(k));
    return m;
}

EnergyLedger energy_check(const TrajectoryRecord& traj, double nu, double L_P, double slack) {
    EnergyLedger led;
    led.L_P = L_P;
    led.slack = slack;
    const double tau = traj.tau;
    double g_int = 0.0;
    for (int k = 1; k <= traj.steps(); ++k) g_int += tau * traj.g_sq[k];
    const double u0_sq = traj.u0_l2 * traj.u0_l2;
    led.M0 = energy_bound(u0_sq, nu, L_P, g_int);

    double diss = 0.0;
    double work = 0.0;
    for (int k = 0; k <= traj.steps(); ++k) {
        if (k > 0) {
            diss += nu * tau * traj.h1[k] * traj.h1[k];
            work += tau * traj.work[k];
        }
        const double e = traj.l2[k] * traj.l2[k];
        led.times.push_back(traj.times[k]);
        led.dissipation.push_back(diss);
        led.lhs.push_back(e + diss);
        led.work_residual.push_back(0.5 * e + diss - work - 0.5 * u0_sq);
    }
    return led;
}

// ---------------------------------------------------------------------------

VectorField TestFunction::at(int k, double t) const {
    if (!path.empty()) return path.at(k);
    VectorField v = shape;
    v *= profile ? profile(t) : 0.0;
    return v;
}

VectorField TestFunction::rate(int k, double t, double tau) const {
    if (!path.empty()) {
        if (k == 0) return VectorField(path.front().grid());
        VectorField d = path.at(k) - path.at(k - 1);
        d *= 1.0 / tau;
        return d;
    }
    VectorField v = shape;
    v *= profile_rate ? profile_rate(t) : 0.0;
    return v;
}

TestFunction zero_test_function(const MacGrid& grid) {
    TestFunction f(grid);
    f.label = "zero";
    f.profile = [](double) { return 0.0; };
    f.profile_rate = [](double) { return 0.0; };
    return f;
}

TestFunction sampled_test_function(const TrajectoryRecord& traj) {
    if (traj.states.empty()) throw DomainError("empty trajectory");
    TestFunction f(traj.states.front().grid());
    f.label = "sampled-path";
    f.path = traj.states;
    return f;
}

namespace {

double max_cell_speed(const VectorField& v) {
    const Eigen::VectorXd w = reconstruct_cells(v);
    double m = 0.0;
    for (Eigen::Index c = 0; c < w.size() / 2; ++c) m = std::max(m, std::hypot(w[2 * c], w[2 * c + 1]));
    return m;
}

std::vector<double> cell_speeds(const VectorField& v) {
    const Eigen::VectorXd w = reconstruct_cells(v);
    std::vector<double> s(w.size() / 2);
    for (std::size_t c = 0; c < s.size(); ++c) s[c] = std::hypot(w[2 * c], w[2 * c + 1]);
    return s;
}

struct Candidate {
    double margin;
    VectorField shape;
};

}  // namespace

TestFunctionFamily bump_family(const ObstacleField& p, const SamplingLattice& lat, const CheckSpec& spec) {
    const MacGrid& g = lat.grid;
    const int nc = g.num_cells();
    const std::vector<ExtReal> samples = sample(p, lat);
    const double r = spec.family_radius;
    const double T = lat.steps * lat.tau;

    // Candidate centres on a lattice with spacing r, keeping the disk inside the box.
    std::vector<Candidate> cands;
    const double lo = r + g.h();
    for (double y = lo; y <= g.ly() - lo + 1e-12; y += r) {
        for (double x = lo; x <= g.lx() - lo + 1e-12; x += r) {
            FieldSpec fs{"vortex", {{"amplitude", 1.0}, {"x0", x}, {"y0", y}, {"radius", r}}};
            VectorField v = make_field(fs, g);
            const auto support = field_support(v);
            double margin = 1.0;
            for (int k = 0; k <= lat.steps && margin > 0; ++k)
                for (int c = 0; c < nc; ++c)
                    if (support[c]) margin = std::min(margin, samples[lat.index(c, k)].min_with(1.0));
            const double s = max_cell_speed(v);
            if (!(margin > 0) || !(s > 0)) continue;
            v *= spec.family_amplitude * margin / s;
            cands.push_back({margin, std::move(v)});
        }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.margin > b.margin; });

    TestFunctionFamily fam;
    const double w = 2.0 * std::numbers::pi / T;
    const int count = std::min<int>(spec.family_bumps, static_cast<int>(cands.size()));
    for (int i = 0; i < count; ++i) {
        for (int sign : {1, -1}) {
            TestFunction f(g);
            std::ostringstream os;
            os << "bump" << i << (sign > 0 ? "+" : "-");
            f.label = os.str();
            f.shape = cands[i].shape;
            f.shape *= sign;
            f.margin = cands[i].margin;
            f.profile = [w](double t) { return 0.5 + 0.5 * std::sin(w * t); };
            f.profile_rate = [w](double t) { return 0.5 * w * std::cos(w * t); };
            // Nodewise admissibility against p.
            for (int k = 0; k <= lat.steps; ++k) {
                const auto speed = cell_speeds(f.at(k, lat.time(k)));
                for (int c = 0; c < nc; ++c) {
                    const ExtReal pc = samples[lat.index(c, k)];
                    if (!pc.is_infinite() && speed[c] > pc.value() * (1.0 + 1e-12))
                        throw DomainError("test function " + f.label + " exceeds the obstacle");
                }
            }
            fam.members.push_back(std::move(f));
        }
    }
    return fam;
}

// Computed states meet the constraint only to solver tolerance.
constexpr double kAdmissibleTol = 1e-8;

ViResidualReport global_vi_residual(const TrajectoryRecord& traj, const TestFunctionFamily& family,
                                    const ObstacleLadder& ladder, const LadderMember& member,
                                    const VectorField& u0, const VectorField& g, double nu, int checkpoints) {
    if (family.members.empty()) throw DomainError("empty test function family");
    if (checkpoints < 1) throw DomainError("need at least one checkpoint");
    const SamplingLattice& lat = ladder.lattice;
    const int K = traj.steps();
    if (K != lat.steps) throw DomainError("trajectory and lattice disagree on the number of steps");
    const double tau = traj.tau;
    const int nc = lat.num_cells();

    std::vector<int> marks;
    for (int i = 1; i <= checkpoints; ++i) {
        const int m = static_cast<int>(std::lround(static_cast<double>(K) * i / checkpoints));
        if (m >= 1 && (marks.empty() || marks.back() != m)) marks.push_back(m);
    }

    ViResidualReport rep;
    rep.worst = -std::numeric_limits<double>::infinity();
    for (const TestFunction& f : family.members) {
        // Analytic members are shrunk onto the approximate constraint set with one factor
        // for the whole path.
        double scale = 1.0;
        if (f.path.empty() && f.margin > 0) {
            double sup = 0.0;
            for (int k = 0; k <= K; ++k) sup = std::max(sup, norm_Linf(f.at(k, lat.time(k))));
            const double M = f.margin + sup;
            double delta_n = 0.0;
            for (int k = 0; k <= K; ++k) {
                std::vector<ExtReal> pk(ladder.base_samples.begin() + lat.index(0, k),
                                        ladder.base_samples.begin() + lat.index(0, k) + nc);
                const ShrinkResult s = shrink_test_function(f.at(k, lat.time(k)), f.margin, pk, member.slice(lat, k), M);
                delta_n = std::max(delta_n, s.delta_n);
            }
            scale = std::max(0.0, 1.0 - delta_n);
        }
        auto z_at = [&](int k) {
            VectorField z = f.at(k, lat.time(k));
            z *= scale;
            return z;
        };
        // Admissibility for p_n at every node.
        for (int k = 1; k <= K; ++k) {
            const VectorField z = z_at(k);
            const double viol = constraint_violation(z, member.slice(lat, k));
            if (viol > kAdmissibleTol)
                throw DomainError("test function " + f.label + " is not admissible for the ladder member");
        }

        const VectorField e0 = u0 - z_at(0);
        const double rhs0 = 0.5 * inner_L2(e0, e0);
        double lhs_sum = 0.0;
        double rhs_sum = 0.0;
        std::size_t next = 0;
        for (int k = 1; k <= K && next < marks.size(); ++k) {
            const double t = lat.time(k);
            const VectorField& u = traj.states[k];
            const VectorField z = z_at(k);
            VectorField rz = f.rate(k, t, tau);
            rz *= scale;
            const VectorField e = u - z;
            lhs_sum += tau * (inner_L2(rz, e) + nu * inner_H1(u, e) + convection_form(u, u, e));
            rhs_sum += tau * inner_L2(g, e);
            if (k == marks[next]) {
                ViResidualRow row{f.label, t, lhs_sum + 0.5 * inner_L2(e, e), rhs_sum + rhs0};
                if (row.residual() > rep.worst) {
                    rep.worst = row.residual();
                    rep.worst_label = f.label;
                }
                rep.rows.push_back(row);
                ++next;
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------

BvSurrogates bv_bound(const ConstantsReport& c, double M0, double nu, double g_norm_q, double kappa, double T) {
    if (!(kappa > 0) || !(nu > 0) || !(T >= 0)) throw DomainError("bv bound needs kappa > 0, nu > 0, T >= 0");
    BvSurrogates s;
    s.M0 = M0;
    s.M1 = std::sqrt(nu * M0) + c.L1 * g_norm_q;
    s.M2 = 9.0 * c.L3 / std::sqrt(nu) * M0;
    s.M3 = s.M1 * std::sqrt(c.L2) + s.M2;
    s.M_kappa = 2.0 * c.L0 * M0 / kappa + s.M3 * std::sqrt(T);
    return s;
}

double BvReport::max_tv() const {
    double m = 0.0;
    for (const BvRun& r : runs) m = std::max(m, r.tv);
    return m;
}

double path_variation(const std::vector<VectorField>& states, const Subdomain& omega, int k_begin, int k_end) {
    if (k_begin < 0 || k_end >= static_cast<int>(states.size()) || k_begin > k_end)
        throw DomainError("bad time window for the variation");
    const DualNormEvaluator eval(omega);
    double tv = 0.0;
    for (int k = k_begin; k < k_end; ++k) tv += eval.evaluate(states[k + 1] - states[k]).value;
    return tv;
}

BvReport bv_estimate(const std::vector<const TrajectoryRecord*>& runs, const ObstacleField& p,
                     const SamplingLattice& lat, const std::vector<double>& box, double t1, double t2, double kappa,
                     const ConstantsReport& constants, double M0, double nu, double g_norm_q) {
    if (box.size() != 4) throw DomainError("box must be [x0, x1, y0, y1]");
    if (runs.empty()) throw DomainError("no runs for the variation estimate");
    const MacGrid& g = lat.grid;
    const double T = lat.steps * lat.tau;
    t1 = std::max(0.0, t1);
    t2 = std::min(T, t2);
    if (!(t1 < t2)) throw DomainError("empty time window for the variation estimate");
    const int k1 = static_cast<int>(std::ceil(t1 / lat.tau - 1e-9));
    const int k2 = static_cast<int>(std::floor(t2 / lat.tau + 1e-9));

    const Subdomain omega = Subdomain::box(g, box[0], box[1], box[2], box[3]);
    if (omega.count() == 0) throw DomainError("subdomain contains no cells");
    const RegionMask mask = region_classify(p, lat, kappa);
    std::vector<std::string> offending;
    for (int k = k1; k <= k2; ++k)
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                if (!omega.contains(i, j) || mask.above(lat.index(g.cell_index(i, j), k))) continue;
                if (offending.size() < 5) {
                    std::ostringstream os;
                    os << "(" << i << "," << j << ",t=" << lat.time(k) << ")";
                    offending.push_back(os.str());
                } else if (offending.size() == 5) {
                    offending.push_back("...");
                }
            }
    if (!offending.empty()) {
        std::string msg = "subcylinder leaves {p > kappa} at cells";
        for (const auto& o : offending) msg += " " + o;
        throw DomainError(msg);
    }

    BvReport rep;
    rep.box = box;
    rep.t1 = t1;
    rep.t2 = t2;
    rep.kappa = kappa;
    rep.window_first = k1;
    rep.constants = constants;
    rep.bound = bv_bound(constants, M0, nu, g_norm_q, kappa, T);
    const DualNormEvaluator eval(omega);
    for (const TrajectoryRecord* tr : runs) {
        if (tr->steps() != lat.steps) throw DomainError("run does not match the lattice");
        BvRun r;
        r.n = tr->n;
        for (int k = k1; k < k2; ++k) {
            const double d = eval.evaluate(tr->states[k + 1] - tr->states[k]).value;
            r.increments.push_back(d);
            r.tv += d;
        }
        rep.runs.push_back(std::move(r));
    }
    return rep;
}

// ---------------------------------------------------------------------------

bool PerturbationReport::ok(double tol) const {
    const double scale = std::max(1.0, std::abs(total));
    return std::abs(second_sum) <= tol * scale && identity_error <= tol * scale &&
           std::abs(first_sum) <= bound * (1.0 + 1e-12) + tol;
}

PerturbationReport perturbation_structure_check(const VectorField& v, const VectorField& w) {
    if (!(v.grid() == w.grid())) throw DomainError("fields live on different grids");
    for (const VectorField* f : {&v, &w}) {
        const double div = divergence(*f).values().cwiseAbs().maxCoeff() * f->grid().h();
        if (div > 1e-10 * std::max(1.0, norm_Linf(*f))) throw DomainError("perturbation check needs solenoidal fields");
    }
    const VectorField d = v - w;
    PerturbationReport r;
    r.total = convection_form(v, v, d) - convection_form(w, w, d);
    r.first_sum = convection_form(d, v, d);
    r.second_sum = convection_form(w, d, d);
    r.identity_error = std::abs(r.total - r.first_sum - r.second_sum);
    r.bound = 9.0 * norm_Linf(v) * seminorm_H1(d) * norm_L2(d);
    return r;
}

// ---------------------------------------------------------------------------

BlockageReport blockage_check(const TrajectoryRecord& traj, std::optional<double> t0, bool forcing_is_zero,
                              double threshold) {
    BlockageReport rep;
    rep.threshold = threshold;
    for (int k = 0; k <= traj.steps(); ++k) rep.decay.emplace_back(traj.times[k], traj.l2[k]);
    if (!t0 || !forcing_is_zero) return rep;
    rep.t0 = *t0;
    const double from = *t0 + traj.tau - 1e-9 * traj.tau;
    bool any = false;
    for (int k = 0; k <= traj.steps(); ++k) {
        if (traj.times[k] < from) continue;
        any = true;
        rep.worst = std::max(rep.worst, traj.l2[k]);
    }
    if (!any) return rep;
    rep.status = rep.worst <= threshold ? CheckStatus::Pass : CheckStatus::Fail;
    return rep;
}

}  // namespace nsvi
