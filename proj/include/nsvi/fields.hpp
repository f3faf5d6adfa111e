#pragma once

#include <string>
#include <vector>

#include "nsvi/grid.hpp"
#include "nsvi/obstacle.hpp"

namespace nsvi {

/// Forcing or initial-data preset. Fields are built from a nodal stream function, so
/// they are discretely divergence-free and vanish on the walls.
///
///  - none: zero field
///  - vortex: psi = amplitude * radius * (1 - r^2/radius^2)^3 inside the disk around (x0, y0)
///  - taylor-green: psi = amplitude / pi * sin^2(pi x / lx) sin^2(pi y / ly)
struct FieldSpec {
    std::string preset = "none";
    ParamMap params;

    bool operator==(const FieldSpec&) const = default;
};

std::vector<std::string> available_field_presets();
/// Defaults for a preset; throws ConfigError naming `section` for an unknown preset.
ParamMap field_default_params(const std::string& preset, const std::string& section);
/// Fills defaults and validates; returns the problems found (empty when valid).
std::vector<std::string> normalize_field_spec(FieldSpec& spec, const std::string& section);

VectorField make_field(const FieldSpec& spec, const MacGrid& grid);

}  // namespace nsvi
