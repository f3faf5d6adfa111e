#include "doctest.h"

#include <cmath>
#include <random>

#include "nsvi/error.hpp"
#include "nsvi/obstacle.hpp"

using namespace nsvi;

TEST_CASE("extended reals") {
    CHECK(ExtReal::infinity().is_infinite());
    CHECK_THROWS_AS(ExtReal::infinity().value(), DomainError);
    CHECK_THROWS_AS(ExtReal::finite(-1.0), DomainError);
    CHECK_THROWS_AS(ExtReal::finite(std::nan("")), DomainError);
    CHECK(ExtReal::finite(2.5).value() == 2.5);
    CHECK(ExtReal::infinity().min_with(3.0) == 3.0);
    CHECK(ExtReal::finite(2.0).min_with(3.0) == 2.0);
}

TEST_CASE("alpha transform") {
    CHECK(alpha_transform(ExtReal::infinity()) == 1.0);
    CHECK(alpha_transform(0.0) == 0.0);
    CHECK(alpha_transform(1.0) == doctest::Approx(0.5));
    CHECK(alpha_transform(3.0) == doctest::Approx(0.75));
}

TEST_CASE("cutoff stays in [1/n, n]") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> logp(-12, 12);
    std::uniform_real_distribution<double> logn(0, 10);
    for (int i = 0; i < 20000; ++i) {
        const double p = std::pow(10.0, logp(rng));
        const double n = std::pow(10.0, logn(rng));
        const double c = cutoff(p, n);
        CHECK(c >= 1.0 / n);
        CHECK(c <= n);
        if (p >= 1.0 / n && p <= n) CHECK(c == p);
    }
    CHECK(cutoff(ExtReal::infinity(), 8) == 8.0);
    CHECK(cutoff(0.0, 8) == doctest::Approx(0.125));
    CHECK_THROWS_AS(cutoff(1.0, 0.5), DomainError);
}

TEST_CASE("preset formulas") {
    SUBCASE("free-flow is unbounded") {
        ObstacleField p("free-flow", {}, 1, 1, 1);
        CHECK(p.evaluate(0.3, 0.7, 0.2).is_infinite());
        CHECK_FALSE(p.blockage_time().has_value());
    }
    SUBCASE("narrowing channel") {
        ObstacleField p("narrowing-channel", ObstacleField::default_params("narrowing-channel"), 1, 1, 1);
        // centre of the throat is open at full height, the wall band is closed
        CHECK(p.evaluate(0.5, 0.5, 0.0).value() == doctest::Approx(2.0));
        CHECK(p.evaluate(0.5, 0.05, 1.0).value() == doctest::Approx(0.0));
        // far from the throat in x the channel is open everywhere
        CHECK(p.evaluate(0.05, 0.05, 1.0).value() == doctest::Approx(2.0));
        CHECK(p.evaluate(0.5, 0.25, 0.0).value() > p.evaluate(0.5, 0.25, 1.0).value());
    }
    SUBCASE("growing disk") {
        ObstacleField p("growing-disk", ObstacleField::default_params("growing-disk"), 1, 1, 1);
        CHECK(p.evaluate(0.5, 0.5, 0.0).value() == 0.0);
        CHECK(p.evaluate(0.02, 0.02, 0.0).is_infinite());
        CHECK(p.alpha(0.5, 0.75, 0.0) > p.alpha(0.5, 0.75, 1.0));
    }
    SUBCASE("total blockage") {
        ObstacleField p("total-blockage", ObstacleField::default_params("total-blockage"), 1, 1, 1);
        CHECK(p.evaluate(0.3, 0.3, 0.0).value() == doctest::Approx(2.0));
        CHECK(p.evaluate(0.3, 0.3, 0.25).value() == 0.0);
        CHECK(p.evaluate(0.3, 0.3, 0.4).value() == 0.0);
        CHECK(p.evaluate(0.3, 0.3, 0.7).value() == doctest::Approx(2.0));
        REQUIRE(p.blockage_time().has_value());
        CHECK(*p.blockage_time() == doctest::Approx(0.25));
        CHECK(*p.reopen_time() == doctest::Approx(0.5));
    }
}

TEST_CASE("preset validation") {
    CHECK_THROWS_AS(ObstacleField("no-such", {}, 1, 1, 1), ConfigError);
    CHECK_THROWS_AS(ObstacleField("constant", {{"colour", 1.0}}, 1, 1, 1), ConfigError);
    CHECK_THROWS_AS(ObstacleField("constant", {{"value", -1.0}}, 1, 1, 1), ConfigError);
    CHECK_THROWS_AS(ObstacleField("free-flow", {}, 1, 1, 0), ConfigError);
    const auto names = ObstacleField::available_presets();
    CHECK(std::find(names.begin(), names.end(), "total-blockage") != names.end());
}

TEST_CASE("alpha continuity per preset") {
    const MacGrid g(32, 32);
    for (const auto& name : ObstacleField::available_presets()) {
        ObstacleField p(name, ObstacleField::default_params(name), 1, 1, 1);
        const double h = g.h();
        double worst = 0;
        for (double t : {0.0, 0.3, 0.7})
            for (int j = 0; j < g.ny(); ++j)
                for (int i = 0; i + 1 < g.nx(); ++i) {
                    worst = std::max(worst, std::abs(p.alpha(g.cell_x(i), g.cell_y(j), t) -
                                                     p.alpha(g.cell_x(i + 1), g.cell_y(j), t)));
                    worst = std::max(worst, std::abs(p.alpha(g.cell_y(j), g.cell_x(i), t) -
                                                     p.alpha(g.cell_y(j), g.cell_x(i + 1), t)));
                }
        CAPTURE(name);
        CHECK(worst <= p.alpha_modulus(h) + 1e-12);
    }
}

TEST_CASE("ladder members") {
    ObstacleField p("narrowing-channel", ObstacleField::default_params("narrowing-channel"), 1, 1, 0.5);
    const SamplingLattice lat{MacGrid(16, 16), 1.0 / 16, 8};
    const ObstacleLadder ladder = build_ladder(p, {4, 8, 16}, lat);
    REQUIRE(ladder.members.size() == 3);
    for (const auto& m : ladder.members) {
        CHECK(m.min_value >= 1.0 / m.n - 1e-15);
        CHECK(m.max_value <= m.n + 1e-15);
        CHECK(std::isfinite(m.lipschitz()));
        CHECK(m.values.size() == lat.size());
    }
    CHECK(&ladder.member(8) == &ladder.members[1]);
    CHECK_THROWS_AS(ladder.member(5), DomainError);

    const LadderValidation v = validate_ladder(ladder, {0.5, 1.0});
    CHECK(v.ok());
}

TEST_CASE("region classification") {
    const SamplingLattice lat{MacGrid(16, 16), 0.125, 4};
    SUBCASE("p = inf") {
        const RegionMask m = region_classify(ObstacleField("free-flow", {}, 1, 1, 0.5), lat, 0.5);
        for (std::size_t i = 0; i < lat.size(); ++i) CHECK(m.infinite_set[i]);
    }
    SUBCASE("p = 0") {
        const RegionMask m = region_classify(ObstacleField("constant", {{"value", 0.0}}, 1, 1, 0.5), lat, 0.5);
        for (std::size_t i = 0; i < lat.size(); ++i) CHECK(m.zero_set[i]);
    }
    SUBCASE("growing disk at t = 0 and the partition property") {
        ObstacleField p("growing-disk", ObstacleField::default_params("growing-disk"), 1, 1, 0.5);
        const RegionMask m = region_classify(p, lat, 0.5);
        for (int c = 0; c < lat.num_cells(); ++c) {
            const double x = lat.grid.cell_x(c % 16) - 0.5;
            const double y = lat.grid.cell_y(c / 16) - 0.5;
            CHECK(bool(m.zero_set[c]) == (std::hypot(x, y) <= 0.1));
        }
        for (std::size_t i = 0; i < lat.size(); ++i)
            CHECK(m.zero_set[i] + m.finite_band[i] + m.super_level[i] + m.infinite_set[i] == 1);
    }
}
