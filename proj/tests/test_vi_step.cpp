#include "doctest.h"

#include <cmath>
#include <random>

#include "construction_cases.hpp"
#include "nsvi/error.hpp"
#include "nsvi/vi_step.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace nsvi;
using namespace nsvi::testing;

namespace {

StepProblem random_problem(const MacGrid& g, std::mt19937_64& rng, double p) {
    return StepProblem{random_solenoidal(g, rng, 1.0), std::vector<double>(g.num_cells(), p),
                       random_solenoidal(g, rng, 4.0), 0.05, 0.05};
}

}  // namespace

TEST_CASE("ball projection") {
    auto p = ball_project({3, 4}, 1);
    CHECK(p[0] == doctest::Approx(0.6));
    CHECK(p[1] == doctest::Approx(0.8));
    p = ball_project({3, 4}, 0);
    CHECK(p[0] == 0.0);
    CHECK(p[1] == 0.0);
    p = ball_project({0.1, -0.2}, 1);
    CHECK(p[0] == 0.1);
    CHECK(p[1] == -0.2);
    CHECK_THROWS_AS(ball_project({1, 1}, -1), DomainError);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int k = 0; k < 10000; ++k) {
        const double r = std::abs(u(rng));
        const std::array<double, 2> a{u(rng), u(rng)};
        const std::array<double, 2> b{u(rng), u(rng)};
        const auto pa = ball_project(a, r);
        const auto pb = ball_project(b, r);
        CHECK(std::hypot(pa[0] - pb[0], pa[1] - pb[1]) <= std::hypot(a[0] - b[0], a[1] - b[1]) + 1e-12);
    }
}

TEST_CASE("solve_step trivial cases") {
    const MacGrid g(8, 8);
    SUBCASE("zero data gives zero") {
        StepProblem prob{VectorField(g), std::vector<double>(g.num_cells(), 1e6), VectorField(g), 0.1, 0.05};
        const StepSolution s = solve_step(prob, SplitParams{});
        CHECK(s.u.dofs().cwiseAbs().maxCoeff() == 0.0);
        CHECK(s.unconstrained);
    }
    SUBCASE("tiny radius") {
        std::mt19937_64 rng(2);
        const double eps = 1e-9;
        const StepProblem prob = random_problem(g, rng, eps);
        const StepSolution s = solve_step(prob, SplitParams{});
        CHECK(s.constraint_violation <= 1e-8);
        for (double v : cell_speeds(s.u)) CHECK(v <= eps + 1e-8);
    }
    SUBCASE("invalid input") {
        StepProblem prob{VectorField(g), std::vector<double>(3, 1.0), VectorField(g), 0.1, 0.05};
        CHECK_THROWS_AS(solve_step(prob, SplitParams{}), DomainError);
        prob.p_slice.assign(g.num_cells(), 0.0);
        CHECK_THROWS_AS(solve_step(prob, SplitParams{}), DomainError);
        prob.p_slice.assign(g.num_cells(), 1.0);
        prob.tau = 0;
        CHECK_THROWS_AS(solve_step(prob, SplitParams{}), DomainError);
        SplitParams bad;
        bad.relaxation = 2.5;
        prob.tau = 0.05;
        CHECK_THROWS_AS(solve_step(prob, bad), DomainError);
    }
}

TEST_CASE("solve_step properties on a constrained step") {
    std::mt19937_64 rng(3);
    const MacGrid g(16, 16);
    StepProblem prob = random_problem(g, rng, 0.0);
    for (int c = 0; c < g.num_cells(); ++c) prob.p_slice[c] = 0.05 + 0.5 * (c % 16) / 16.0;
    const SplitParams sp;
    const StepSolution s = solve_step(prob, sp);
    REQUIRE_FALSE(s.unconstrained);
    CHECK(s.constraint_violation <= sp.feas_tol);
    CHECK(divergence(s.u).values().cwiseAbs().maxCoeff() < 1e-10);

    SUBCASE("energy step inequality") {
        const double lhs = 0.5 * (std::pow(norm_L2(s.u), 2) - std::pow(norm_L2(prob.u_prev), 2)) / prob.tau +
                           prob.nu * std::pow(seminorm_H1(s.u), 2);
        CHECK(lhs <= inner_L2(prob.g_slice, s.u) + sp.kkt_tol);
    }
    SUBCASE("complementarity") {
        const auto speed = cell_speeds(s.u);
        for (int c = 0; c < g.num_cells(); ++c)
            CHECK(s.radial_multiplier[c] * (prob.p_slice[c] - speed[c]) <= 1e-7);
    }
    SUBCASE("probe residuals") {
        CHECK(std::abs(step_vi_residual(s.u, prob, {s.u}, 1e-7)) <= 1e-12);
        CHECK(step_vi_residual(s.u, prob, {VectorField(g)}) <= sp.kkt_tol);
        std::vector<VectorField> probes;
        for (int k = 0; k < 50; ++k) probes.push_back(fit_under(random_solenoidal(g, rng), prob.p_slice, 0.999));
        double worst = -1e300;
        for (const auto& z : probes)
            worst = std::max(worst, step_vi_residual(s.u, prob, {z}) / (1.0 + seminorm_H1(z)));
        CHECK(worst <= sp.kkt_tol);
        VectorField bad = 10.0 * probes.front();
        CHECK_THROWS_AS(step_vi_residual(s.u, prob, {bad}), DomainError);
        CHECK_THROWS_AS(step_vi_residual(s.u, prob, {random_field(g, rng)}), DomainError);
    }
    SUBCASE("step operator is monotone") {
        const SparseMatrix A = build_step_matrix(prob);
        for (int k = 0; k < 20; ++k) {
            const VectorField d = random_field(g, rng);
            CHECK(d.dofs().dot(A * d.dofs()) >= g.cell_area() / prob.tau * d.dofs().squaredNorm() * (1 - 1e-12));
        }
    }
    SUBCASE("pressure balances the force") {
        CHECK(s.pressure.values().allFinite());
    }
    SUBCASE("warm start reproduces the solution") {
        const StepSolution w = solve_step(prob, sp, &s.state);
        CHECK((w.u.dofs() - s.u.dofs()).cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("solve_step against the projected-gradient oracle") {
    for (const StepInstance& inst : step_corpus({6, 8})) {
        CAPTURE(inst.label);
        const StepSolution s = solve_step(inst.prob, tight_params());
        const OracleResult o = projected_gradient_oracle(inst.prob);
        CHECK(o.change <= 1e-13);
        CHECK((s.u.dofs() - o.u.dofs()).cwiseAbs().maxCoeff() <= 1e-6);
        const int viol = free_violations(inst.prob);
        if (inst.regime == Regime::Inactive) CHECK(viol == 0);
        if (inst.regime == Regime::Partial) {
            CHECK(viol > 0);
            CHECK(viol < inst.prob.u_prev.grid().num_cells());
        }
        if (inst.regime == Regime::Saturated) CHECK(viol == inst.prob.u_prev.grid().num_cells());
    }
}

TEST_CASE("shift_constraint_set") {
    std::mt19937_64 rng(5);
    const MacGrid g(8, 8);
    const VectorField z = random_solenoidal(g, rng, 0.5);
    SUBCASE("no shift") {
        const std::vector<double> p(g.num_cells(), 1.0);
        const ShiftResult r = shift_constraint_set(z, p, p, 1.0);
        CHECK(r.factor == 1.0);
        CHECK((r.z.dofs() - z.dofs()).norm() == 0.0);
    }
    SUBCASE("half shift halves the field") {
        const std::vector<double> ps(g.num_cells(), 1.5);
        const std::vector<double> pt(g.num_cells(), 1.0);
        const ShiftResult r = shift_constraint_set(fit_under(z, ps, 1.0), ps, pt, 1.0);
        CHECK(r.factor == doctest::Approx(0.5));
    }
    SUBCASE("precondition") {
        const std::vector<double> ps(g.num_cells(), 2.0);
        const std::vector<double> pt(g.num_cells(), 1.0);
        CHECK_THROWS_AS(shift_constraint_set(fit_under(z, ps, 1.0), ps, pt, 1.0), DomainError);
    }
    SUBCASE("random instances") {
        for (int k = 0; k < 100; ++k) {
            const ShiftCase c = random_shift_case(rng);
            const ShiftResult r = shift_constraint_set(c.z, c.p_s, c.p_t, c.mu);
            CHECK(excess(r.z, c.p_t) <= 1e-12);
            CHECK(divergence(r.z).values().cwiseAbs().maxCoeff() < 1e-12);
            const double area = c.z.grid().lx() * c.z.grid().ly();
            CHECK(norm_L2(r.z - c.z) <= c.p_max / c.mu * std::sqrt(area) * r.sup_shift + 1e-14);
            CHECK(seminorm_H1(r.z) <= seminorm_H1(c.z) + 1e-14);
        }
    }
}

TEST_CASE("shrink_test_function") {
    std::mt19937_64 rng(6);
    SUBCASE("p_n equal to p on the support") {
        ShrinkCase c = random_shrink_case(rng);
        std::vector<double> same(c.p.size());
        for (std::size_t i = 0; i < c.p.size(); ++i) same[i] = c.p[i].min_with(1e6);
        const ShrinkResult r = shrink_test_function(c.v, c.delta, c.p, same, 1e6);
        CHECK(r.delta_n == 0.0);
        CHECK((r.v.dofs() - c.v.dofs()).norm() == 0.0);
    }
    SUBCASE("delta_n >= 1 gives zero") {
        ShrinkCase c = random_shrink_case(rng);
        std::vector<double> tiny(c.p.size(), 1e-6);
        const ShrinkResult r = shrink_test_function(c.v, c.delta, c.p, tiny);
        CHECK(r.delta_n >= 1.0);
        CHECK(r.v.dofs().cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("support outside {p >= delta}") {
        ShrinkCase c = random_shrink_case(rng);
        for (auto& x : c.p) x = ExtReal::finite(0.0);
        CHECK_THROWS_AS(shrink_test_function(c.v, c.delta, c.p, c.p_n), DomainError);
    }
    SUBCASE("random instances") {
        for (int k = 0; k < 100; ++k) {
            const ShrinkCase c = random_shrink_case(rng);
            const ShrinkResult r = shrink_test_function(c.v, c.delta, c.p, c.p_n);
            CHECK(excess(r.v, c.p_n) <= 1e-12);
            const double s = std::max(0.0, 1.0 - r.delta_n);
            CHECK((r.v.dofs() - s * c.v.dofs()).cwiseAbs().maxCoeff() <= 1e-15);
        }
    }
}
