#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nsvi/grid.hpp"

namespace nsvi {

/// Value in [0, +inf]. Infinity is a distinguished state, not a floating-point inf, and
/// only alpha_transform, cutoff and min_with may consume it.
class ExtReal {
public:
    static ExtReal finite(double x);
    static ExtReal infinity() noexcept { return ExtReal(0.0, true); }

    bool is_infinite() const noexcept { return inf_; }
    /// Finite value; throws DomainError for infinity.
    double value() const;
    /// min(this, cap) as a plain number.
    double min_with(double cap) const noexcept { return inf_ ? cap : (value_ < cap ? value_ : cap); }

    bool operator==(const ExtReal& o) const noexcept { return inf_ == o.inf_ && (inf_ || value_ == o.value_); }

private:
    ExtReal(double v, bool inf) noexcept : value_(v), inf_(inf) {}
    double value_;
    bool inf_;
};

/// alpha = p / (1 + p), 1 for p = inf.
double alpha_transform(ExtReal p);
double alpha_transform(double p);

/// Clamp p to [1/n, n].
double cutoff(ExtReal p, double n);
double cutoff(double p, double n);

using ParamMap = std::map<std::string, double>;

/**
 * Obstacle p(x, t) on [0, lx] x [0, ly] x [0, horizon], given by a named preset.
 *
 * Presets:
 *  - free-flow, lid-free-check: p = inf
 *  - constant: p = value (value may be inf)
 *  - narrowing-channel: p = p_max * clamp(max(|x - lx/2| - d0, w(t) - |y - ly/2|) / s, 0, 1),
 *    throat half-width w falling linearly from w0 to w1 over the horizon
 *  - growing-disk: alpha = clamp((r - R(t)) / s, 0, 1), p = alpha / (1 - alpha),
 *    R growing linearly from r0 to r1; p = 0 in the disk, inf outside the annulus
 *  - total-blockage: p = p_max * sigma(t), sigma ramping 1 -> 0 on [t0 - ramp, t0],
 *    0 until t_open, back to 1 on [t_open, t_open + ramp]
 */
class ObstacleField {
public:
    ObstacleField(std::string preset, ParamMap params, double lx, double ly, double horizon);

    const std::string& preset() const noexcept { return preset_; }
    const ParamMap& params() const noexcept { return params_; }
    double lx() const noexcept { return lx_; }
    double ly() const noexcept { return ly_; }
    double horizon() const noexcept { return horizon_; }

    ExtReal evaluate(double x, double y, double t) const;
    double alpha(double x, double y, double t) const { return alpha_transform(evaluate(x, y, t)); }
    /// Declared modulus of continuity of alpha: |alpha(P) - alpha(Q)| <= modulus(d) when the
    /// space-time distance of P and Q is at most d.
    double alpha_modulus(double dist) const;

    /// Time at which p vanishes identically, if the preset has one.
    std::optional<double> blockage_time() const;
    /// Time at which a blocked obstacle starts to reopen.
    std::optional<double> reopen_time() const;

    static std::vector<std::string> available_presets();
    /// Parameter names and defaults; throws ConfigError for an unknown preset.
    static ParamMap default_params(const std::string& preset);

private:
    double param(const char* name) const { return params_.at(name); }

    std::string preset_;
    ParamMap params_;
    double lx_;
    double ly_;
    double horizon_;
};

/// Cell centres of a grid at the time nodes t_k = k tau, k = 0..steps.
struct SamplingLattice {
    MacGrid grid;
    double tau;
    int steps;

    double time(int k) const noexcept { return k * tau; }
    int num_cells() const noexcept { return grid.num_cells(); }
    std::size_t size() const noexcept { return static_cast<std::size_t>(steps + 1) * grid.num_cells(); }
    std::size_t index(int cell, int k) const noexcept {
        return static_cast<std::size_t>(k) * grid.num_cells() + cell;
    }
};

/// Exact lattice samples of p.
std::vector<ExtReal> sample(const ObstacleField& p, const SamplingLattice& lattice);

struct LadderMember {
    double n = 0.0;
    double radius_space = 0.0;
    double radius_time = 0.0;
    int window_space = 0;
    int window_time = 0;
    double lipschitz_space = 0.0;  ///< max |difference| / h over adjacent cells
    double lipschitz_time = 0.0;   ///< max |difference| / tau over adjacent time nodes
    double min_value = 0.0;
    double max_value = 0.0;
    std::vector<double> values;  ///< lattice samples, time-major

    double at(const SamplingLattice& lat, int cell, int k) const { return values[lat.index(cell, k)]; }
    /// Cell values at time node k.
    std::vector<double> slice(const SamplingLattice& lat, int k) const;
    double lipschitz() const noexcept { return lipschitz_space > lipschitz_time ? lipschitz_space : lipschitz_time; }
    /// Mollification floor 2 (L_x r_x + L_t r_t) used by the validation report.
    double resolution_floor() const noexcept { return 2.0 * (lipschitz_space * radius_space + lipschitz_time * radius_time); }
};

struct ObstacleLadder {
    ObstacleField base;
    SamplingLattice lattice;
    std::vector<ExtReal> base_samples;
    std::vector<LadderMember> members;

    const LadderMember& member(double n) const;
};

/// Cut off at each n and box-average over a space-time window of radius
/// max(2h, 1/(4n)) in space and 1/(4n) in time.
ObstacleLadder build_ladder(const ObstacleField& p, const std::vector<double>& indices, const SamplingLattice& lattice);

struct LadderValidationRow {
    double n = 0.0;
    double kappa = 0.0;
    double sup_distance = 0.0;  ///< max |p_n - p| on the sampled set {p <= kappa}
    double floor = 0.0;
    bool nonincreasing_ok = true;
    bool sandwich_ok = true;  ///< kappa <= p_n <= p on {p > kappa}, up to the floor
};

struct LadderValidation {
    std::vector<LadderValidationRow> rows;
    /// Per kappa: smallest ladder index from which the sandwich holds for all later members.
    std::vector<std::pair<double, std::optional<double>>> n_M;
    bool ok() const;
};

LadderValidation validate_ladder(const ObstacleLadder& ladder, const std::vector<double>& kappas);

struct RegionMask {
    std::vector<std::uint8_t> zero_set;
    std::vector<std::uint8_t> finite_band;  ///< 0 < p <= kappa
    std::vector<std::uint8_t> super_level;  ///< kappa < p < inf
    std::vector<std::uint8_t> infinite_set;
    /// Cells/times with p > kappa (super_level or infinite_set).
    bool above(std::size_t i) const noexcept { return super_level[i] || infinite_set[i]; }
};

RegionMask region_classify(const ObstacleField& p, const SamplingLattice& lattice, double kappa);

}  // namespace nsvi
