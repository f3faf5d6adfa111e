#include "nsvi/config.hpp"

#include <cmath>

#include "nsvi/error.hpp"

namespace nsvi {

int TimeSpec::steps() const {
    if (!(tau > 0) || !(t_final > 0)) throw ConfigError("time.tau and time.t_final must be > 0");
    const double k = std::round(t_final / tau);
    if (k < 1 || std::abs(k * tau - t_final) > 1e-9 * t_final)
        throw ConfigError("time.tau must divide time.t_final");
    return static_cast<int>(k);
}

ObstacleField SimulationConfig::make_obstacle() const {
    return ObstacleField(obstacle.preset, obstacle.params, grid.lx, grid.ly, time.t_final);
}

std::vector<std::string> SimulationConfig::validate() const {
    std::vector<std::string> out;
    auto absorb = [&](auto&& fn) {
        try {
            fn();
        } catch (const ConfigError& e) {
            out.insert(out.end(), e.problems().begin(), e.problems().end());
        }
    };

    absorb([&] { grid.make(); });
    absorb([&] { time.steps(); });
    if (!(nu > 0) || !std::isfinite(nu)) out.push_back("physics.nu must be > 0");
    absorb([&] { make_obstacle(); });

    if (ladder.empty()) out.push_back("ladder.indices must not be empty");
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        if (!(ladder[i] >= 1) || !std::isfinite(ladder[i])) out.push_back("ladder.indices must be finite and >= 1");
        if (i > 0 && !(ladder[i] > ladder[i - 1])) out.push_back("ladder.indices must be strictly increasing");
    }

    FieldSpec f = forcing;
    for (auto& p : normalize_field_spec(f, "forcing")) out.push_back(p);
    FieldSpec u0 = initial;
    for (auto& p : normalize_field_spec(u0, "initial")) out.push_back(p);

    if (outputs.cadence < 0) out.push_back("outputs.cadence must be >= 0");
    if (outputs.directory.empty()) out.push_back("outputs.directory must not be empty");

    const SplitParams& t = tolerances;
    if (!(t.feas_tol > 0)) out.push_back("tolerances.feas_tol must be > 0");
    if (!(t.kkt_tol > 0)) out.push_back("tolerances.kkt_tol must be > 0");
    if (!(t.rho >= 0)) out.push_back("tolerances.rho must be >= 0 (0 selects 1/tau)");
    if (!(t.relaxation > 0 && t.relaxation < 2)) out.push_back("tolerances.relaxation must lie in (0, 2)");
    if (t.max_iter < 1) out.push_back("tolerances.max_iter must be >= 1");

    const CheckSpec& c = checks;
    if (!(c.energy_slack >= 0)) out.push_back("checks.energy_slack must be >= 0");
    if (!(c.constraint_slack >= 0)) out.push_back("checks.constraint_slack must be >= 0");
    if (!(c.vi_slack >= 0)) out.push_back("checks.vi_slack must be >= 0");
    if (!(c.blockage_threshold > 0)) out.push_back("checks.blockage_threshold must be > 0");
    if (!(c.bv_kappa > 0)) out.push_back("checks.bv_kappa must be > 0");
    if (c.bv_box.size() != 4 || !(c.bv_box[0] < c.bv_box[1]) || !(c.bv_box[2] < c.bv_box[3]))
        out.push_back("checks.bv_box must be [x0, x1, y0, y1] with x0 < x1 and y0 < y1");
    if (c.bv_window.size() != 2 || !(c.bv_window[0] < c.bv_window[1]))
        out.push_back("checks.bv_window must be [t1, t2] with t1 < t2");
    if (c.family_bumps < 0) out.push_back("checks.family_bumps must be >= 0");
    if (!(c.family_radius > 0)) out.push_back("checks.family_radius must be > 0");
    if (!(c.family_amplitude > 0 && c.family_amplitude <= 1)) out.push_back("checks.family_amplitude must lie in (0, 1]");
    if (c.vi_checkpoints < 1) out.push_back("checks.vi_checkpoints must be >= 1");
    return out;
}

}  // namespace nsvi
