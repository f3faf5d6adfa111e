#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "nsvi/error.hpp"
#include "nsvi/grid.hpp"
#include "support.hpp"

using namespace nsvi;
using nsvi::testing::random_field;
using nsvi::testing::random_solenoidal;

namespace {

/// Centred advective form by plain loops over padded arrays. Walls carry zero normal
/// velocity; tangential ghosts are reflected with a sign change (no slip).
double tilde_loop(const VectorField& a, const VectorField& v, const VectorField& w) {
    const MacGrid& g = a.grid();
    const int nx = g.nx();
    const int ny = g.ny();
    const double h = g.h();
    auto U = [&](const VectorField& f, int i, int j) -> double {
        if (i <= 0 || i >= nx) return 0.0;
        if (j < 0) return -f.u(i, 0);
        if (j >= ny) return -f.u(i, ny - 1);
        return f.u(i, j);
    };
    auto V = [&](const VectorField& f, int i, int j) -> double {
        if (j <= 0 || j >= ny) return 0.0;
        if (i < 0) return -f.v(0, j);
        if (i >= nx) return -f.v(nx - 1, j);
        return f.v(i, j);
    };
    double sum = 0.0;
    for (int j = 0; j < ny; ++j)
        for (int i = 1; i < nx; ++i) {
            const double ax = a.u(i, j);
            const double ay = 0.25 * (a.v(i - 1, j) + a.v(i, j) + a.v(i - 1, j + 1) + a.v(i, j + 1));
            const double adv = ax * (U(v, i + 1, j) - U(v, i - 1, j)) / (2 * h) +
                               ay * (U(v, i, j + 1) - U(v, i, j - 1)) / (2 * h);
            sum += adv * w.u(i, j);
        }
    for (int j = 1; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double ay = a.v(i, j);
            const double ax = 0.25 * (a.u(i, j - 1) + a.u(i + 1, j - 1) + a.u(i, j) + a.u(i + 1, j));
            const double adv = ax * (V(v, i + 1, j) - V(v, i - 1, j)) / (2 * h) +
                               ay * (V(v, i, j + 1) - V(v, i, j - 1)) / (2 * h);
            sum += adv * w.v(i, j);
        }
    return h * h * sum;
}

}  // namespace

TEST_CASE("grid indexing") {
    const MacGrid g(8, 6, 1.0, 0.75);
    CHECK(g.h() == doctest::Approx(0.125));
    CHECK(g.num_u() == 7 * 6);
    CHECK(g.num_v() == 8 * 5);
    CHECK(g.u_index(0, 0) == -1);
    CHECK(g.u_index(8, 0) == -1);
    CHECK(g.v_index(0, 0) == -1);
    CHECK(g.v_index(0, 6) == -1);
    CHECK(g.u_index(1, 0) == 0);
    CHECK(g.v_index(0, 1) == g.num_u());
    CHECK_THROWS(MacGrid(8, 8, 1.0, 0.7));
    CHECK_THROWS(MacGrid(1, 8));
}

TEST_CASE("curl fields are divergence-free and projection is idempotent") {
    std::mt19937_64 rng(3);
    const MacGrid g(12, 12);
    const VectorField s = random_solenoidal(g, rng);
    CHECK(divergence(s).values().cwiseAbs().maxCoeff() < 1e-12);
    CHECK((leray_project(s).dofs() - s.dofs()).cwiseAbs().maxCoeff() < 1e-10);

    const VectorField r = random_field(g, rng);
    const VectorField p = leray_project(r);
    CHECK(divergence(p).values().cwiseAbs().maxCoeff() < 1e-10);
    CHECK((leray_project(p).dofs() - p.dofs()).cwiseAbs().maxCoeff() < 1e-10);

    ScalarField phi(g);
    for (auto& x : phi.values()) x = std::uniform_real_distribution<double>(-1, 1)(rng);
    CHECK(leray_project(gradient(phi)).dofs().cwiseAbs().maxCoeff() < 1e-10);

    // coordinates in the stream-function basis reproduce the field
    const Eigen::VectorXd psi = solenoidal_coordinates(p);
    CHECK((curl(g, psi).dofs() - p.dofs()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("adjoint pairs") {
    std::mt19937_64 rng(5);
    const MacGrid g(7, 9, 7.0 / 9.0, 1.0);
    const VectorField v = random_field(g, rng);
    Eigen::VectorXd psi = Eigen::VectorXd::Random(g.num_psi());
    CHECK(curl(g, psi).dofs().dot(v.dofs()) == doctest::Approx(psi.dot(curl_adjoint(v))));
    Eigen::VectorXd cells = Eigen::VectorXd::Random(2 * g.num_cells());
    CHECK(reconstruct_cells(v).dot(cells) == doctest::Approx(v.dofs().dot(reconstruct_cells_adjoint(g, cells).dofs())));
    CHECK((Eigen::VectorXd(build_curl(g) * psi) - curl(g, psi).dofs()).norm() < 1e-12);
}

TEST_CASE("convection form") {
    std::mt19937_64 rng(11);
    const MacGrid g(8, 8);
    SUBCASE("skew symmetry on random triples") {
        for (int k = 0; k < 200; ++k) {
            const VectorField a = random_field(g, rng);
            const VectorField v = random_field(g, rng);
            const VectorField w = random_field(g, rng);
            CHECK(std::abs(convection_form(a, v, v)) <= 1e-13);
            CHECK(convection_form(a, v, w) == doctest::Approx(-convection_form(a, w, v)).epsilon(1e-12));
        }
    }
    SUBCASE("zero advecting field") {
        const VectorField z(g);
        CHECK(convection_form(z, random_field(g, rng), random_field(g, rng)) == 0.0);
    }
    SUBCASE("matches the direct loop") {
        for (int k = 0; k < 20; ++k) {
            const VectorField a = random_solenoidal(g, rng);
            const VectorField v = random_solenoidal(g, rng);
            const VectorField w = random_solenoidal(g, rng);
            const double oracle = 0.5 * (tilde_loop(a, v, w) - tilde_loop(a, w, v));
            CHECK(convection_form(a, v, w) == doctest::Approx(oracle).epsilon(1e-12));
            CHECK(inner_L2(advect(a, v), w) == doctest::Approx(tilde_loop(a, v, w)).epsilon(1e-12));
        }
    }
    SUBCASE("bilinear in the last two slots") {
        const VectorField a = random_field(g, rng);
        const VectorField v = random_field(g, rng);
        const VectorField v2 = random_field(g, rng);
        const VectorField w = random_field(g, rng);
        CHECK(convection_form(a, 2.0 * v + v2, w) ==
              doctest::Approx(2.0 * convection_form(a, v, w) + convection_form(a, v2, w)));
    }
    SUBCASE("sparse assembly agrees") {
        const VectorField a = random_field(g, rng);
        const VectorField v = random_field(g, rng);
        const VectorField w = random_field(g, rng);
        const SparseMatrix A = build_advection(a);
        CHECK(w.dofs().dot(A * v.dofs()) == doctest::Approx(tilde_loop(a, v, w)).epsilon(1e-12));
    }
}

TEST_CASE("norms") {
    std::mt19937_64 rng(2);
    const MacGrid g(8, 8);
    const VectorField z(g);
    CHECK(norm_L2(z) == 0.0);
    CHECK(seminorm_H1(z) == 0.0);
    CHECK(norm_W14(z) == 0.0);

    const VectorField v = random_field(g, rng);
    for (double c : {-3.0, 0.5, 2.0}) {
        CHECK(norm_L2(c * v) == doctest::Approx(std::abs(c) * norm_L2(v)));
        CHECK(seminorm_H1(c * v) == doctest::Approx(std::abs(c) * seminorm_H1(v)));
        CHECK(norm_W14(c * v) == doctest::Approx(std::abs(c) * norm_W14(v)));
    }
    const SparseMatrix K = build_stiffness(g);
    CHECK(v.dofs().dot(K * v.dofs()) == doctest::Approx(std::pow(seminorm_H1(v), 2)));

    SUBCASE("single interior spike") {
        VectorField s(g);
        s.dofs()[g.u_index(4, 4)] = 1.0;
        const double h = g.h();
        CHECK(norm_L2(s) == doctest::Approx(h));
        // four unit differences of size 1/h, each weighted by h^2
        CHECK(seminorm_H1(s) == doctest::Approx(2.0));
        // cell reconstruction averages the two faces of a cell
        CHECK(norm_Linf(s) == doctest::Approx(0.5));
        CHECK(sup_speed(s) == doctest::Approx(1.0));
    }
}

TEST_CASE("poincare constant") {
    const PoincareEstimate e16 = poincare_estimate(MacGrid(16, 16));
    const PoincareEstimate e32 = poincare_estimate(MacGrid(32, 32));
    CHECK(e32.constant <= 0.26);
    CHECK(e32.constant > 0.1);
    // refinement changes the value at second order
    CHECK(std::abs(e32.constant - e16.constant) < 0.01);

    std::mt19937_64 rng(9);
    const MacGrid g(16, 16);
    for (int k = 0; k < 100; ++k) {
        const VectorField v = leray_project(random_field(g, rng));
        CHECK(norm_L2(v) <= e16.constant * seminorm_H1(v) * (1 + 1e-8));
    }
}

TEST_CASE("dual norm") {
    std::mt19937_64 rng(4);
    const MacGrid g(8, 8);
    const Subdomain box = Subdomain::box(g, 0.25, 0.625, 0.25, 0.625);
    CHECK(dual_norm_W_star(VectorField(g), box).value == 0.0);

    const VectorField f = random_field(g, rng);
    const double base = dual_norm_W_star(f, box).value;
    CHECK(base > 0);
    CHECK(dual_norm_W_star(3.0 * f, box).value == doctest::Approx(3.0 * base).epsilon(1e-6));

    SUBCASE("brute force over the sphere") {
        const DualNormEvaluator ev(box);
        const int d = ev.dimension();
        REQUIRE(d >= 1);
        REQUIRE(d <= 12);
        std::normal_distribution<double> nd(0, 1);
        double best = 0;
        for (int s = 0; s < 200000; ++s) {
            Eigen::VectorXd c(d);
            for (auto& x : c) x = nd(rng);
            const VectorField z = ev.field_from_coordinates(c);
            best = std::max(best, std::abs(inner_L2(f, z)) / norm_W14(z));
        }
        const double value = ev.evaluate(f).value;
        CAPTURE(d);
        CHECK(value >= 0.98 * best);
        CHECK(value <= best * 1.02);
    }
    // a single corner cell has no interior stream-function node
    CHECK_THROWS_AS(DualNormEvaluator(Subdomain::box(g, 0.0, 0.1, 0.0, 0.1)), DomainError);
}

TEST_CASE("embedding constants") {
    const ConstantsReport c = embedding_constants(MacGrid(12, 12), 2);
    for (double x : {c.L_P, c.L0, c.L1, c.L2, c.L3}) {
        CHECK(x > 0);
        CHECK(std::isfinite(x));
    }
    CHECK(c.L1 == c.L_P);
    CHECK(c.entries.size() >= 5);

    std::mt19937_64 rng(8);
    const MacGrid g(12, 12);
    int worse = 0;
    for (int k = 0; k < 100; ++k) {
        const VectorField z = random_solenoidal(g, rng);
        if (norm_Linf(z) > c.L0 * norm_W14(z) * 1.001) ++worse;
        if (seminorm_H1(z) > c.L2 * norm_W14(z) * 1.001) ++worse;
        if (norm_L4(z) > c.L3 * seminorm_H1(z) * 1.001) ++worse;
    }
    CHECK(worse == 0);
}
