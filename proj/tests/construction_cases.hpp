// Random instances for the constraint-set shift and the test-function shrink.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "nsvi/obstacle.hpp"
#include "nsvi/vi_step.hpp"
#include "support.hpp"

namespace nsvi::testing {

inline std::vector<double> cell_speeds(const VectorField& v) {
    const Eigen::VectorXd w = reconstruct_cells(v);
    std::vector<double> out(w.size() / 2);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = std::hypot(w[2 * c], w[2 * c + 1]);
    return out;
}

/// Largest excess of the cell speeds of v over p.
inline double excess(const VectorField& v, const std::vector<double>& p) {
    const auto s = cell_speeds(v);
    double worst = -1e300;
    for (std::size_t c = 0; c < s.size(); ++c) worst = std::max(worst, s[c] - p[c]);
    return worst;
}

/// Scale v so its cell speeds stay below frac * p.
inline VectorField fit_under(VectorField v, const std::vector<double>& p, double frac) {
    const auto s = cell_speeds(v);
    double k = 1e300;
    for (std::size_t c = 0; c < s.size(); ++c)
        if (s[c] > 0) k = std::min(k, frac * p[c] / s[c]);
    return v *= k;
}

struct ShiftCase {
    VectorField z;
    std::vector<double> p_s;
    std::vector<double> p_t;
    double mu = 0.0;  ///< minimum of the ladder member over the whole lattice
    double p_max = 0.0;
};

/// Two obstacle slices on a random grid whose difference stays below mu, and a field
/// admissible for the first one.
inline ShiftCase random_shift_case(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> size(4, 12);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int n = size(rng);
    const MacGrid g(n, n);
    const double mu = 0.05 + u01(rng);
    const double spread = 3.0 * u01(rng);
    ShiftCase out{VectorField(g), {}, {}, mu, 0.0};
    const double shift = mu * 0.999 * u01(rng);
    for (int c = 0; c < g.num_cells(); ++c) {
        const double ps = mu + spread * u01(rng);
        double pt = ps + shift * (2.0 * u01(rng) - 1.0);
        pt = std::max(mu, pt);
        out.p_s.push_back(ps);
        out.p_t.push_back(pt);
        out.p_max = std::max({out.p_max, ps, pt});
    }
    out.z = fit_under(random_solenoidal(g, rng), out.p_s, u01(rng));
    return out;
}

struct ShrinkCase {
    VectorField v;
    double delta = 0.0;
    std::vector<ExtReal> p;
    std::vector<double> p_n;
    double n = 1.0;
};

/// Obstacle with zero, finite and infinite cells; the test field lives inside a box where
/// p >= delta, with speeds bounded by p there.
inline ShrinkCase random_shrink_case(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> size(8, 14);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int n = size(rng);
    const MacGrid g(n, n);
    ShrinkCase out{VectorField(g), 0.05 + 0.5 * u01(rng), {}, {}, 1.0 + 99.0 * u01(rng) * u01(rng)};

    const int i0 = 1 + int(u01(rng) * (n / 3));
    const int j0 = 1 + int(u01(rng) * (n / 3));
    const int i1 = std::min(n - 2, i0 + 4 + int(u01(rng) * (n / 2)));
    const int j1 = std::min(n - 2, j0 + 4 + int(u01(rng) * (n / 2)));
    std::vector<double> finite_p(g.num_cells());
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const int c = g.cell_index(i, j);
            const bool inside = i >= i0 && i <= i1 && j >= j0 && j <= j1;
            const double r = u01(rng);
            if (inside && r < 0.2) {
                out.p.push_back(ExtReal::infinity());
                finite_p[c] = 1e300;
            } else if (inside) {
                const double val = out.delta + 3.0 * u01(rng);
                out.p.push_back(ExtReal::finite(val));
                finite_p[c] = val;
            } else {
                const double val = r < 0.5 ? 0.0 : 3.0 * u01(rng);
                out.p.push_back(ExtReal::finite(val));
                finite_p[c] = val;
            }
            out.p_n.push_back(cutoff(out.p.back(), out.n));
        }

    // stream function on nodes strictly inside the box, so every touched cell is in it
    std::normal_distribution<double> nd(0, 1);
    Eigen::VectorXd psi = Eigen::VectorXd::Zero(g.num_psi());
    for (int j = j0 + 1; j <= j1; ++j)
        for (int i = i0 + 1; i <= i1; ++i) psi[g.psi_index(i, j)] = nd(rng);
    out.v = fit_under(curl(g, psi), finite_p, u01(rng));
    return out;
}

}  // namespace nsvi::testing
