#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "nsvi/diagnostics.hpp"
#include "nsvi/error.hpp"
#include "nsvi/stepper.hpp"
#include "support.hpp"

using namespace nsvi;
using namespace nsvi::testing;

namespace {

struct Fixture {
    SimulationConfig config;
    ObstacleLadder ladder;
    TrajectoryRecord traj;

    explicit Fixture(SimulationConfig c, double n)
        : config(std::move(c)), ladder(make_ladder(config, {n})), traj(run(config, ladder, n)) {}

    VectorField u0() const { return make_field(config.initial, ladder.lattice.grid); }
    VectorField g() const { return make_field(config.forcing, ladder.lattice.grid); }
};

}  // namespace

TEST_CASE("energy bound") {
    CHECK(energy_bound(1.0, 0.1, 0.2251, 2.0) == doctest::Approx(2.01340).epsilon(1e-5));
    CHECK(energy_bound(0.0, 1.0, 0.3, 0.0) == 0.0);
    CHECK_THROWS_AS(energy_bound(1.0, 0.0, 0.3, 1.0), DomainError);
}

TEST_CASE("energy ledger") {
    SUBCASE("zero data") {
        SimulationConfig c = small_config("narrowing-channel", 8, 1.0 / 16, 0.25);
        c.forcing = FieldSpec{};
        const Fixture f(c, 8);
        const EnergyLedger led = energy_check(f.traj, c.nu, 0.2);
        CHECK(led.M0 == 0.0);
        for (double x : led.lhs) CHECK(x == 0.0);
        CHECK(led.ok());
    }
    SUBCASE("forced constrained run") {
        const SimulationConfig c = small_config("narrowing-channel", 12, 1.0 / 32, 0.25);
        const Fixture f(c, 8);
        const double L_P = poincare_constant(f.ladder.lattice.grid);
        const EnergyLedger led = energy_check(f.traj, c.nu, L_P);
        CHECK(led.ok());
        CHECK(led.M0 > 0);
        for (std::size_t k = 1; k < led.dissipation.size(); ++k) CHECK(led.dissipation[k] >= led.dissipation[k - 1]);
        // the z = 0 inequality holds step by step for the linearised scheme
        for (double w : led.work_residual) CHECK(w <= 1e-9);
    }
}

TEST_CASE("global VI residual") {
    SimulationConfig c = small_config("narrowing-channel", 16, 1.0 / 32, 0.25);
    c.checks.family_radius = 0.1;
    const Fixture f(c, 8);
    TestFunctionFamily fam;
    fam.members.push_back(zero_test_function(f.ladder.lattice.grid));
    fam.members.push_back(sampled_test_function(f.traj));
    const ViResidualReport rep =
        global_vi_residual(f.traj, fam, f.ladder, f.ladder.member(8), f.u0(), f.g(), c.nu, 4);
    const EnergyLedger led = energy_check(f.traj, c.nu, 0.2);
    int zero_rows = 0;
    for (const auto& row : rep.rows) {
        if (row.label == "zero") {
            ++zero_rows;
            const int k = static_cast<int>(std::lround(row.t / c.time.tau));
            CHECK(std::abs(row.residual() - led.work_residual[k]) <= 1e-10);
        }
        if (row.label == "sampled-path") CHECK(std::abs(row.residual()) <= 1e-12);
    }
    CHECK(zero_rows == 4);
    CHECK(rep.worst <= c.checks.vi_slack);

    SUBCASE("bump family") {
        const TestFunctionFamily bumps = bump_family(f.ladder.base, f.ladder.lattice, c.checks);
        REQUIRE_FALSE(bumps.members.empty());
        for (const auto& m : bumps.members) {
            CHECK(m.margin > 0);
            const auto support = field_support(m.shape);
            CHECK(std::count(support.begin(), support.end(), std::uint8_t{1}) > 0);
        }
        const ViResidualReport b =
            global_vi_residual(f.traj, bumps, f.ladder, f.ladder.member(8), f.u0(), f.g(), c.nu, 4);
        CHECK(b.worst <= c.checks.vi_slack);
    }
    SUBCASE("inadmissible member") {
        std::mt19937_64 rng(1);
        TestFunctionFamily bad;
        TestFunction big(f.ladder.lattice.grid);
        big.label = "big";
        big.path.assign(f.traj.states.size(), random_solenoidal(f.ladder.lattice.grid, rng, 100.0));
        bad.members.push_back(big);
        CHECK_THROWS_AS(global_vi_residual(f.traj, bad, f.ladder, f.ladder.member(8), f.u0(), f.g(), c.nu, 4),
                        DomainError);
    }
}

TEST_CASE("total variation") {
    SUBCASE("stationary run") {
        SimulationConfig c = small_config("free-flow", 8, 1.0 / 16, 0.25);
        c.forcing = FieldSpec{};
        const Fixture f(c, 8);
        const Subdomain box = Subdomain::box(f.ladder.lattice.grid, 0.2, 0.8, 0.2, 0.8);
        CHECK(path_variation(f.traj.states, box, 0, f.traj.steps()) == 0.0);
    }
    SUBCASE("splitting the interval") {
        SimulationConfig c = small_config("free-flow", 8, 1.0 / 16, 0.5);
        c.initial = FieldSpec{"vortex", {{"amplitude", 1.0}}};
        const Fixture f(c, 8);
        const Subdomain box = Subdomain::box(f.ladder.lattice.grid, 0.2, 0.8, 0.2, 0.8);
        const int K = f.traj.steps();
        const double whole = path_variation(f.traj.states, box, 0, K);
        CHECK(whole > 0);
        for (int s = 1; s < K; ++s)
            CHECK(whole <= path_variation(f.traj.states, box, 0, s) + path_variation(f.traj.states, box, s, K) + 1e-10);
    }
    SUBCASE("bound and hypothesis") {
        SimulationConfig c = small_config("narrowing-channel", 16, 1.0 / 16, 0.25);
        const ObstacleLadder ladder = make_ladder(c, {4, 8});
        const TrajectoryRecord r4 = run(c, ladder, 4);
        const TrajectoryRecord r8 = run(c, ladder, 8);
        const ConstantsReport k = embedding_constants(ladder.lattice.grid, 1);
        const double M0 = energy_check(r8, c.nu, k.L_P).M0;
        const double gq = std::sqrt(0.25 * r8.g_sq.back());
        const BvReport rep = bv_estimate({&r4, &r8}, ladder.base, ladder.lattice, {0.05, 0.2, 0.05, 0.95}, 0.0, 0.25,
                                         0.5, k, M0, c.nu, gq);
        CHECK(rep.runs.size() == 2);
        CHECK(rep.bound.M_kappa > 0);
        CHECK(rep.ok());
        CHECK_THROWS_AS(bv_estimate({&r4, &r8}, ladder.base, ladder.lattice, {0.4, 0.6, 0.0, 0.2}, 0.0, 0.25, 0.5, k,
                                    M0, c.nu, gq),
                        DomainError);
    }
    SUBCASE("surrogate formula") {
        ConstantsReport k;
        k.L0 = 2;
        k.L1 = 0.25;
        k.L2 = 4;
        k.L3 = 0.5;
        const BvSurrogates s = bv_bound(k, 1.0, 0.25, 2.0, 0.5, 4.0);
        CHECK(s.M1 == doctest::Approx(0.5 + 0.5));
        CHECK(s.M2 == doctest::Approx(9 * 0.5 * 2.0));
        CHECK(s.M3 == doctest::Approx(1.0 * 2.0 + 9.0));
        CHECK(s.M_kappa == doctest::Approx(2 * 2 * 1.0 / 0.5 + 11.0 * 2.0));
    }
}

TEST_CASE("perturbation structure") {
    std::mt19937_64 rng(12);
    const MacGrid g(8, 8);
    const VectorField v = random_solenoidal(g, rng);
    const PerturbationReport same = perturbation_structure_check(v, v);
    CHECK(same.total == 0.0);
    CHECK(same.bound == 0.0);
    for (int k = 0; k < 50; ++k) {
        const VectorField a = random_solenoidal(g, rng, 2.0);
        const VectorField b = random_solenoidal(g, rng, 2.0);
        const PerturbationReport r = perturbation_structure_check(a, b);
        CHECK(std::abs(r.second_sum) <= 1e-12);
        CHECK(r.identity_error <= 1e-12);
        CHECK(std::abs(r.total) <= r.bound);
        CHECK(r.ok());
    }
    CHECK_THROWS_AS(perturbation_structure_check(random_field(g, rng), v), DomainError);
}

TEST_CASE("blockage check") {
    SimulationConfig c = small_config("free-flow", 8, 1.0 / 16, 0.25);
    c.forcing = FieldSpec{};
    const Fixture f(c, 8);
    CHECK(blockage_check(f.traj, std::nullopt, true).status == CheckStatus::NotApplicable);
    CHECK(blockage_check(f.traj, 0.1, false).status == CheckStatus::NotApplicable);
    const BlockageReport r = blockage_check(f.traj, 0.1, true);
    CHECK(r.status == CheckStatus::Pass);
    CHECK(r.decay.size() == f.traj.states.size());
    CHECK(std::string(to_string(CheckStatus::NotApplicable)) == "not-applicable");
}
