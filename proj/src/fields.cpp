#include "nsvi/fields.hpp"

#include <cmath>
#include <numbers>

#include "nsvi/error.hpp"

namespace nsvi {

std::vector<std::string> available_field_presets() { return {"none", "vortex", "taylor-green"}; }

ParamMap field_default_params(const std::string& preset, const std::string& section) {
    if (preset == "none") return {};
    if (preset == "vortex") return {{"amplitude", 1.0}, {"x0", 0.5}, {"y0", 0.5}, {"radius", 0.25}};
    if (preset == "taylor-green") return {{"amplitude", 1.0}};
    throw ConfigError(section + ".preset: unknown preset '" + preset + "' (available: none, vortex, taylor-green)");
}

std::vector<std::string> normalize_field_spec(FieldSpec& spec, const std::string& section) {
    std::vector<std::string> problems;
    ParamMap full;
    try {
        full = field_default_params(spec.preset, section);
    } catch (const ConfigError& e) {
        return e.problems();
    }
    for (const auto& [k, v] : spec.params) {
        if (!full.count(k)) {
            problems.push_back(section + "." + k + ": unknown parameter for preset '" + spec.preset + "'");
            continue;
        }
        if (!std::isfinite(v)) problems.push_back(section + "." + k + " must be finite");
        full[k] = v;
    }
    if (spec.preset == "vortex" && !(full["radius"] > 0)) problems.push_back(section + ".radius must be > 0");
    spec.params = std::move(full);
    return problems;
}

VectorField make_field(const FieldSpec& spec, const MacGrid& g) {
    FieldSpec s = spec;
    if (auto problems = normalize_field_spec(s, "field"); !problems.empty()) throw ConfigError(problems);
    if (s.preset == "none") return VectorField(g);

    const double pi = std::numbers::pi;
    Eigen::VectorXd psi(g.num_psi());
    for (int j = 1; j < g.ny(); ++j)
        for (int i = 1; i < g.nx(); ++i) {
            const double x = i * g.h();
            const double y = j * g.h();
            double val = 0.0;
            if (s.preset == "vortex") {
                const double R = s.params["radius"];
                const double q = (std::pow(x - s.params["x0"], 2) + std::pow(y - s.params["y0"], 2)) / (R * R);
                if (q < 1.0) val = s.params["amplitude"] * R * std::pow(1.0 - q, 3);
            } else {
                const double sx = std::sin(pi * x / g.lx());
                const double sy = std::sin(pi * y / g.ly());
                val = s.params["amplitude"] / pi * sx * sx * sy * sy;
            }
            psi[g.psi_index(i, j)] = val;
        }
    return curl(g, psi);
}

}  // namespace nsvi
