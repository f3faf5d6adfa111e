#include "doctest.h"

#include <cmath>

#include "nsvi/error.hpp"
#include "nsvi/stepper.hpp"
#include "support.hpp"

using namespace nsvi;
using nsvi::testing::small_config;

TEST_CASE("zero data stays zero") {
    SimulationConfig c = small_config("narrowing-channel", 8, 1.0 / 16, 0.25);
    c.forcing.preset = "none";
    c.forcing.params.clear();
    const TrajectoryRecord r = run(c, 8);
    REQUIRE(r.steps() == 4);
    for (const auto& s : r.states) CHECK(s.dofs().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("record layout") {
    const SimulationConfig c = small_config("narrowing-channel", 10, 1.0 / 16, 0.25);
    const TrajectoryRecord r = run(c, 8);
    CHECK(r.n == 8);
    CHECK(r.states.size() == 5);
    CHECK(r.times.back() == doctest::Approx(0.25));
    CHECK(r.work.front() == 0.0);
    CHECK(r.g_sq.front() == 0.0);
    for (int k = 0; k <= r.steps(); ++k) {
        CHECK(r.l2[k] == doctest::Approx(norm_L2(r.states[k])));
        CHECK(r.violation[k] <= c.tolerances.feas_tol);
    }
    CHECK(r.max_violation() <= c.tolerances.feas_tol);
}

TEST_CASE("free flow equals the unconstrained run") {
    SimulationConfig c = small_config("free-flow", 12, 1.0 / 32, 0.25);
    c.initial = FieldSpec{"taylor-green", {{"amplitude", 1.0}}};
    c.ladder = {1e6};
    const TrajectoryRecord a = run(c, 1e6);
    const TrajectoryRecord b = run_unconstrained(c);
    REQUIRE(a.steps() == b.steps());
    for (int k = 0; k <= a.steps(); ++k) CHECK((a.states[k].dofs() - b.states[k].dofs()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("initial data") {
    SimulationConfig c = small_config("growing-disk", 16, 1.0 / 16, 0.25);
    c.initial = FieldSpec{"vortex", {{"amplitude", 2.0}, {"x0", 0.2}, {"y0", 0.2}, {"radius", 0.15}}};
    const ObstacleLadder ladder = make_ladder(c, {8});
    const VectorField u0 = make_field(c.initial, ladder.lattice.grid);
    const InitialData d = build_initial_data(u0, ladder, ladder.member(8));
    CHECK(norm_L2(d.u0n) <= norm_L2(u0) + 1e-15);
    CHECK(constraint_violation(d.u0n, ladder.member(8).slice(ladder.lattice, 0)) <= 1e-12);
    CHECK(d.shrink.delta_hat > 0);

    SUBCASE("p_n = p on the support leaves u0 unchanged") {
        SimulationConfig free = c;
        free.obstacle.preset = "free-flow";
        free.obstacle.params.clear();
        const ObstacleLadder l = make_ladder(free, {1e6});
        const InitialData e = build_initial_data(u0, l, l.member(1e6));
        CHECK(e.shrink.delta_n == 0.0);
        CHECK((e.u0n.dofs() - u0.dofs()).norm() == 0.0);
    }
    SUBCASE("support inside the disk is rejected") {
        SimulationConfig bad = c;
        bad.initial.params = {{"amplitude", 1.0}, {"x0", 0.5}, {"y0", 0.5}, {"radius", 0.2}};
        const VectorField v0 = make_field(bad.initial, ladder.lattice.grid);
        CHECK_THROWS_AS(build_initial_data(v0, ladder, ladder.member(8)), ConfigError);
    }
}

TEST_CASE("failed steps abort with the partial trajectory") {
    SimulationConfig c = small_config("narrowing-channel", 8, 1.0 / 16, 0.25);
    c.tolerances.feas_tol = 1e-300;
    c.tolerances.kkt_tol = 1e-300;
    c.tolerances.max_iter = 2;
    try {
        (void)run(c, 8);
        FAIL("expected the run to abort");
    } catch (const RunAborted& e) {
        CHECK(e.partial().steps() >= 0);
        CHECK(e.partial().steps() < 4);
        CHECK_FALSE(e.residuals().empty());
    }
}

TEST_CASE("blockage with zero forcing decays monotonically") {
    SimulationConfig c = small_config("total-blockage", 12, 1.0 / 32, 0.75);
    c.forcing = FieldSpec{};
    c.initial = FieldSpec{"taylor-green", {{"amplitude", 1.0}}};
    c.ladder = {1e10};
    const TrajectoryRecord r = run(c, 1e10);
    for (int k = 1; k <= r.steps(); ++k) CHECK(r.l2[k] <= r.l2[k - 1] * (1 + 1e-12) + 1e-14);
    for (int k = 0; k <= r.steps(); ++k)
        if (r.times[k] >= 0.25 + c.time.tau - 1e-12) CHECK(r.l2[k] <= 1e-8);
}

TEST_CASE("ladder distances") {
    SimulationConfig c = small_config("narrowing-channel", 8, 1.0 / 16, 0.25);
    c.ladder = {2, 4, 8};
    const LadderRun lr = run_ladder(c);
    REQUIRE(lr.runs.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(lr.distance[i][i] == 0.0);
        for (std::size_t j = 0; j < 3; ++j) CHECK(lr.distance[i][j] == lr.distance[j][i]);
    }
    CHECK(lr.cauchy.size() == 2);
    CHECK(l2q_distance(lr.runs[0], lr.runs[0]) == 0.0);
    CHECK(lr.distance[0][2] == doctest::Approx(l2q_distance(lr.runs[0], lr.runs[2])));

    c.ladder = {4};
    CHECK_THROWS_AS(run_ladder(c), ConfigError);
}
