#include "nsvi/obstacle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nsvi/error.hpp"

namespace nsvi {

ExtReal ExtReal::finite(double x) {
    if (std::isinf(x) && x > 0) return infinity();
    if (!(x >= 0.0)) throw DomainError("obstacle values must be >= 0 (got " + std::to_string(x) + ")");
    return ExtReal(x, false);
}

double ExtReal::value() const {
    if (inf_) throw DomainError("arithmetic on an infinite obstacle value");
    return value_;
}

double alpha_transform(ExtReal p) {
    if (p.is_infinite()) return 1.0;
    const double v = p.value();
    return v / (1.0 + v);
}

double alpha_transform(double p) { return alpha_transform(ExtReal::finite(p)); }

double cutoff(ExtReal p, double n) {
    if (!(n >= 1.0)) throw DomainError("ladder index must be >= 1");
    if (p.is_infinite()) return n;
    return std::clamp(p.value(), 1.0 / n, n);
}

double cutoff(double p, double n) { return cutoff(ExtReal::finite(p), n); }

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kPresets = {"free-flow",  "lid-free-check", "constant",
                                           "narrowing-channel", "growing-disk", "total-blockage"};

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

std::vector<std::string> ObstacleField::available_presets() { return kPresets; }

ParamMap ObstacleField::default_params(const std::string& preset) {
    if (preset == "free-flow" || preset == "lid-free-check") return {};
    if (preset == "constant") return {{"value", 1.0}};
    if (preset == "narrowing-channel")
        return {{"p_max", 2.0}, {"d0", 0.25}, {"w0", 0.3}, {"w1", 0.1}, {"s", 0.1}};
    if (preset == "growing-disk") return {{"x0", 0.5}, {"y0", 0.5}, {"r0", 0.1}, {"r1", 0.2}, {"s", 0.15}};
    if (preset == "total-blockage") return {{"p_max", 2.0}, {"t0", 0.25}, {"t_open", 0.5}, {"ramp", 0.125}};
    std::string list;
    for (const auto& p : kPresets) list += (list.empty() ? "" : ", ") + p;
    throw ConfigError("obstacle.preset: unknown preset '" + preset + "' (available: " + list + ")");
}

ObstacleField::ObstacleField(std::string preset, ParamMap params, double lx, double ly, double horizon)
    : preset_(std::move(preset)), lx_(lx), ly_(ly), horizon_(horizon) {
    ParamMap full = default_params(preset_);
    std::vector<std::string> problems;
    for (const auto& [k, v] : params) {
        if (!full.count(k)) {
            problems.push_back("obstacle." + k + ": unknown parameter for preset '" + preset_ + "'");
            continue;
        }
        full[k] = v;
    }
    params_ = std::move(full);
    if (!(lx > 0) || !(ly > 0) || !(horizon > 0)) problems.push_back("obstacle domain and horizon must be > 0");

    auto positive = [&](const char* k) {
        if (!(params_.at(k) > 0)) problems.push_back(std::string("obstacle.") + k + " must be > 0");
    };
    auto nonneg = [&](const char* k) {
        if (!(params_.at(k) >= 0)) problems.push_back(std::string("obstacle.") + k + " must be >= 0");
    };
    if (preset_ == "constant") {
        nonneg("value");
    } else if (preset_ == "narrowing-channel") {
        positive("p_max");
        positive("s");
        nonneg("d0");
        nonneg("w0");
        nonneg("w1");
        if (std::isinf(params_.at("p_max"))) problems.push_back("obstacle.p_max must be finite");
    } else if (preset_ == "growing-disk") {
        positive("s");
        nonneg("r0");
        nonneg("r1");
    } else if (preset_ == "total-blockage") {
        positive("p_max");
        positive("ramp");
        if (std::isinf(params_.at("p_max"))) problems.push_back("obstacle.p_max must be finite");
        if (!(params_.at("t0") >= params_.at("ramp")))
            problems.push_back("obstacle.t0 must be >= obstacle.ramp so that p starts fully open");
        if (!(params_.at("t_open") >= params_.at("t0"))) problems.push_back("obstacle.t_open must be >= obstacle.t0");
    }
    if (!problems.empty()) throw ConfigError(problems);
}

ExtReal ObstacleField::evaluate(double x, double y, double t) const {
    if (preset_ == "free-flow" || preset_ == "lid-free-check") return ExtReal::infinity();
    if (preset_ == "constant") return ExtReal::finite(param("value"));
    const double frac = horizon_ > 0 ? std::clamp(t / horizon_, 0.0, 1.0) : 0.0;
    if (preset_ == "narrowing-channel") {
        const double w = param("w0") + (param("w1") - param("w0")) * frac;
        const double a = std::abs(x - 0.5 * lx_) - param("d0");
        const double b = w - std::abs(y - 0.5 * ly_);
        return ExtReal::finite(param("p_max") * clamp01(std::max(a, b) / param("s")));
    }
    if (preset_ == "growing-disk") {
        const double R = param("r0") + (param("r1") - param("r0")) * frac;
        const double r = std::hypot(x - param("x0"), y - param("y0"));
        const double a = clamp01((r - R) / param("s"));
        if (a >= 1.0) return ExtReal::infinity();
        return ExtReal::finite(a / (1.0 - a));
    }
    // total-blockage
    const double t0 = param("t0");
    const double ramp = param("ramp");
    const double t_open = param("t_open");
    double sigma = 1.0;
    if (t < t0 - ramp)
        sigma = 1.0;
    else if (t <= t0)
        sigma = (t0 - t) / ramp;
    else if (t <= t_open)
        sigma = 0.0;
    else
        sigma = std::min(1.0, (t - t_open) / ramp);
    return ExtReal::finite(param("p_max") * clamp01(sigma));
}

double ObstacleField::alpha_modulus(double dist) const {
    if (preset_ == "free-flow" || preset_ == "lid-free-check" || preset_ == "constant") return 0.0;
    if (preset_ == "narrowing-channel") {
        const double wdot = std::abs(param("w1") - param("w0")) / horizon_;
        return param("p_max") / param("s") * (1.0 + wdot) * dist;
    }
    if (preset_ == "growing-disk") {
        const double rdot = std::abs(param("r1") - param("r0")) / horizon_;
        return (1.0 + rdot) / param("s") * dist;
    }
    return param("p_max") / param("ramp") * dist;
}

std::optional<double> ObstacleField::blockage_time() const {
    if (preset_ == "total-blockage") return param("t0");
    if (preset_ == "constant" && param("value") == 0.0) return 0.0;
    return std::nullopt;
}

std::optional<double> ObstacleField::reopen_time() const {
    if (preset_ == "total-blockage") return param("t_open");
    return std::nullopt;
}

// ---------------------------------------------------------------------------

std::vector<ExtReal> sample(const ObstacleField& p, const SamplingLattice& lat) {
    std::vector<ExtReal> out;
    out.reserve(lat.size());
    const MacGrid& g = lat.grid;
    for (int k = 0; k <= lat.steps; ++k)
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) out.push_back(p.evaluate(g.cell_x(i), g.cell_y(j), lat.time(k)));
    return out;
}

std::vector<double> LadderMember::slice(const SamplingLattice& lat, int k) const {
    const auto first = values.begin() + static_cast<std::ptrdiff_t>(lat.index(0, k));
    return std::vector<double>(first, first + lat.num_cells());
}

const LadderMember& ObstacleLadder::member(double n) const {
    for (const auto& m : members)
        if (m.n == n) return m;
    throw DomainError("ladder has no member with index " + std::to_string(n));
}

namespace {

/// Clipped moving average along one axis of a strided array.
void box_average(std::vector<double>& data, std::size_t count, std::size_t stride, std::size_t lines_outer,
                 std::size_t outer_stride, std::size_t lines_inner, std::size_t inner_stride, int m) {
    if (m <= 0) return;
    std::vector<double> line(count);
    for (std::size_t a = 0; a < lines_outer; ++a)
        for (std::size_t b = 0; b < lines_inner; ++b) {
            const std::size_t base = a * outer_stride + b * inner_stride;
            for (std::size_t i = 0; i < count; ++i) line[i] = data[base + i * stride];
            for (std::size_t i = 0; i < count; ++i) {
                const std::size_t lo = i >= static_cast<std::size_t>(m) ? i - m : 0;
                const std::size_t hi = std::min(count - 1, i + m);
                double s = 0.0;
                for (std::size_t q = lo; q <= hi; ++q) s += line[q];
                data[base + i * stride] = s / static_cast<double>(hi - lo + 1);
            }
        }
}

}  // namespace

ObstacleLadder build_ladder(const ObstacleField& p, const std::vector<double>& indices, const SamplingLattice& lat) {
    std::vector<std::string> problems;
    if (indices.empty()) problems.push_back("ladder.indices must not be empty");
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (!(indices[i] >= 1.0) || !std::isfinite(indices[i]))
            problems.push_back("ladder.indices must be finite and >= 1");
        if (i > 0 && !(indices[i] > indices[i - 1])) problems.push_back("ladder.indices must be strictly increasing");
    }
    if (!(lat.tau > 0) || lat.steps < 0) problems.push_back("sampling lattice needs tau > 0 and steps >= 0");
    if (!problems.empty()) throw ConfigError(problems);

    const MacGrid& g = lat.grid;
    const double h = g.h();
    ObstacleLadder ladder{p, lat, sample(p, lat), {}};
    const std::size_t nx = g.nx();
    const std::size_t ny = g.ny();
    const std::size_t nc = g.num_cells();
    const std::size_t nt = lat.steps + 1;

    for (double n : indices) {
        LadderMember m;
        m.n = n;
        m.radius_space = std::max(2.0 * h, 1.0 / (4.0 * n));
        m.radius_time = 1.0 / (4.0 * n);
        m.window_space = static_cast<int>(std::floor(m.radius_space / h + 1e-9));
        m.window_time = static_cast<int>(std::floor(m.radius_time / lat.tau + 1e-9));
        if (2 * m.window_space >= g.nx() || 2 * m.window_space >= g.ny()) {
            std::ostringstream os;
            os << "grid too coarse for ladder index " << n << ": mollifier radius " << m.radius_space
               << " spans half the domain (refine grid.nx/grid.ny)";
            throw ConfigError(os.str());
        }

        m.values.resize(lat.size());
        for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = cutoff(ladder.base_samples[i], n);
        box_average(m.values, nx, 1, nt, nc, ny, nx, m.window_space);      // along x
        box_average(m.values, ny, nx, nt, nc, nx, 1, m.window_space);      // along y
        box_average(m.values, nt, nc, 1, 0, nc, 1, m.window_time);         // along t

        m.min_value = *std::min_element(m.values.begin(), m.values.end());
        m.max_value = *std::max_element(m.values.begin(), m.values.end());
        double lx = 0.0;
        double lt = 0.0;
        for (int k = 0; k <= lat.steps; ++k)
            for (int j = 0; j < g.ny(); ++j)
                for (int i = 0; i < g.nx(); ++i) {
                    const double v = m.at(lat, g.cell_index(i, j), k);
                    if (i + 1 < g.nx()) lx = std::max(lx, std::abs(m.at(lat, g.cell_index(i + 1, j), k) - v) / h);
                    if (j + 1 < g.ny()) lx = std::max(lx, std::abs(m.at(lat, g.cell_index(i, j + 1), k) - v) / h);
                    if (k < lat.steps) lt = std::max(lt, std::abs(m.at(lat, g.cell_index(i, j), k + 1) - v) / lat.tau);
                }
        m.lipschitz_space = lx;
        m.lipschitz_time = lt;
        ladder.members.push_back(std::move(m));
    }
    return ladder;
}

bool LadderValidation::ok() const {
    for (const auto& r : rows)
        if (!r.nonincreasing_ok) return false;
    return true;
}

LadderValidation validate_ladder(const ObstacleLadder& ladder, const std::vector<double>& kappas) {
    if (ladder.members.empty()) throw DomainError("validate_ladder needs a nonempty ladder");
    LadderValidation rep;
    const auto& base = ladder.base_samples;
    for (double kappa : kappas) {
        if (!(kappa > 0)) throw DomainError("kappa must be > 0");
        double prev = std::numeric_limits<double>::infinity();
        std::vector<bool> sandwich;
        for (const auto& m : ladder.members) {
            LadderValidationRow row;
            row.n = m.n;
            row.kappa = kappa;
            row.floor = m.resolution_floor();
            for (std::size_t i = 0; i < base.size(); ++i) {
                const double pn = m.values[i];
                const ExtReal p = base[i];
                if (!p.is_infinite() && p.value() <= kappa) {
                    row.sup_distance = std::max(row.sup_distance, std::abs(pn - p.value()));
                } else {
                    const bool upper = p.is_infinite() || pn <= p.value() + row.floor;
                    if (!(pn >= kappa - row.floor) || !upper) row.sandwich_ok = false;
                }
            }
            row.nonincreasing_ok = row.sup_distance <= prev + 1e-12 || row.sup_distance <= row.floor;
            prev = std::min(prev, row.sup_distance);
            sandwich.push_back(row.sandwich_ok);
            rep.rows.push_back(row);
        }
        std::optional<double> n_M;
        for (std::size_t i = sandwich.size(); i-- > 0;) {
            if (!sandwich[i]) break;
            n_M = ladder.members[i].n;
        }
        rep.n_M.emplace_back(kappa, n_M);
    }
    return rep;
}

RegionMask region_classify(const ObstacleField& p, const SamplingLattice& lat, double kappa) {
    if (!(kappa > 0)) throw DomainError("kappa must be > 0");
    const auto s = sample(p, lat);
    RegionMask m;
    m.zero_set.assign(s.size(), 0);
    m.finite_band.assign(s.size(), 0);
    m.super_level.assign(s.size(), 0);
    m.infinite_set.assign(s.size(), 0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i].is_infinite())
            m.infinite_set[i] = 1;
        else if (s[i].value() == 0.0)
            m.zero_set[i] = 1;
        else if (s[i].value() <= kappa)
            m.finite_band[i] = 1;
        else
            m.super_level[i] = 1;
    }
    return m;
}

}  // namespace nsvi
