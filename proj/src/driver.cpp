#include "nsvi/driver.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "nsvi/error.hpp"
#include "nsvi/fields.hpp"
#include "nsvi/scenario_io.hpp"
#include "nsvi/stepper.hpp"

#ifndef NSVI_VERSION
#define NSVI_VERSION "0.0.0"
#endif

namespace nsvi {

const std::vector<std::string>& check_names() {
    static const std::vector<std::string> names = {"energy", "constraint", "vi", "bv", "perturbation", "blockage"};
    return names;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string short_fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

std::string index_tag(double n) { return "n" + fmt(n); }

CheckResult make_check(std::string name, bool ok, double worst, double threshold, std::string detail = {}) {
    return {std::move(name), ok ? CheckStatus::Pass : CheckStatus::Fail, worst, threshold, std::move(detail)};
}

std::string describe(const CheckResult& c) {
    std::string s = c.name + ": " + to_string(c.status);
    if (c.status != CheckStatus::NotApplicable)
        s += " (worst " + short_fmt(c.worst) + ", threshold " + short_fmt(c.threshold) + ")";
    const bool is_file = c.detail.ends_with(".csv") || c.detail.ends_with(".json");
    if (c.status == CheckStatus::Fail && !c.detail.empty() && !is_file) s += ": " + c.detail;
    return s;
}

double largest_index(const SimulationConfig& c) { return *std::max_element(c.ladder.begin(), c.ladder.end()); }

bool forcing_is_zero(const SimulationConfig& c) {
    return c.forcing.preset == "none" || make_field(c.forcing, c.grid.make()).dofs().cwiseAbs().maxCoeff() == 0.0;
}

double g_norm_q(const TrajectoryRecord& r) {
    double s = 0.0;
    for (int k = 1; k <= r.steps(); ++k) s += r.tau * r.g_sq[k];
    return std::sqrt(s);
}

RunManifest base_manifest(const std::string& command, const SimulationConfig& config) {
    RunManifest m;
    m.command = command;
    m.config_hash = config_hash(config);
    m.version = NSVI_VERSION;
    m.timestamp = manifest_timestamp();
    return m;
}

void finish(CommandReport& rep, RunManifest& m) {
    m.checks = rep.checks;
    m.files.push_back("manifest.json");
    write_manifest(m, rep.output_dir / "manifest.json");
    for (const auto& c : rep.checks) {
        rep.summary += describe(c) + "\n";
        if (c.status == CheckStatus::Fail) {
            const bool is_file = c.detail.ends_with(".csv") || c.detail.ends_with(".json");
            if (rep.passed && is_file) rep.failing_report = (rep.output_dir / c.detail).string();
            rep.passed = false;
        }
    }
}

void write_run_outputs(const TrajectoryRecord& rec, const EnergyLedger& led, const std::string& name,
                       const std::filesystem::path& dir, RunManifest& m) {
    write_timeseries(rec, led, dir / name);
    m.files.push_back(name);
}

}  // namespace

// ---------------------------------------------------------------------------

CheckResult energy_result(const VerifyInputs& in, double L_P) {
    double worst = -std::numeric_limits<double>::infinity();
    for (const TrajectoryRecord* r : in.runs) {
        const EnergyLedger led = energy_check(*r, in.config.nu, L_P, in.config.checks.energy_slack);
        worst = std::max(worst, -led.worst_margin());
    }
    return make_check("energy", worst <= in.config.checks.energy_slack, worst, in.config.checks.energy_slack);
}

CheckResult constraint_result(const VerifyInputs& in) {
    double worst = 0.0;
    for (const TrajectoryRecord* r : in.runs) worst = std::max(worst, r->max_violation());
    return make_check("constraint", worst <= in.config.checks.constraint_slack, worst, in.config.checks.constraint_slack);
}

CheckResult vi_result(const VerifyInputs& in, ViResidualReport* report) {
    const SimulationConfig& c = in.config;
    const TrajectoryRecord& r = *in.runs.back();
    const MacGrid g = c.grid.make();
    try {
        TestFunctionFamily fam = bump_family(in.ladder.base, in.ladder.lattice, c.checks);
        fam.members.insert(fam.members.begin(), sampled_test_function(r));
        fam.members.insert(fam.members.begin(), zero_test_function(g));
        ViResidualReport rep = global_vi_residual(r, fam, in.ladder, in.ladder.member(r.n), make_field(c.initial, g),
                                                  make_field(c.forcing, g), c.nu, c.checks.vi_checkpoints);
        const double worst = rep.worst;
        if (report) *report = std::move(rep);
        return make_check("vi", worst <= c.checks.vi_slack, worst, c.checks.vi_slack, "vi_residuals.csv");
    } catch (const DomainError& e) {
        return make_check("vi", false, std::numeric_limits<double>::infinity(), c.checks.vi_slack, e.what());
    }
}

CheckResult bv_result(const VerifyInputs& in, const ConstantsReport& constants, BvReport* report) {
    const SimulationConfig& c = in.config;
    double M0 = 0.0;
    for (const TrajectoryRecord* r : in.runs) M0 = std::max(M0, energy_check(*r, c.nu, constants.L_P).M0);
    try {
        BvReport rep = bv_estimate(in.runs, in.ladder.base, in.ladder.lattice, c.checks.bv_box, c.checks.bv_window[0],
                                   c.checks.bv_window[1], c.checks.bv_kappa, constants, M0, c.nu,
                                   g_norm_q(*in.runs.front()));
        const double worst = rep.max_tv();
        const double bound = rep.bound.M_kappa;
        if (report) *report = std::move(rep);
        return make_check("bv", worst <= bound, worst, bound, "bv.csv");
    } catch (const DomainError& e) {
        return make_check("bv", false, std::numeric_limits<double>::infinity(), 0.0, e.what());
    }
}

CheckResult perturbation_result(const SimulationConfig& config, const std::vector<const TrajectoryRecord*>& runs) {
    const MacGrid g = config.grid.make();
    std::mt19937_64 rng(20240607);
    std::normal_distribution<double> dist(0.0, 1.0);
    auto random_field = [&] {
        Eigen::VectorXd psi(g.num_psi());
        for (Eigen::Index i = 0; i < psi.size(); ++i) psi[i] = dist(rng) * g.h();
        return curl(g, psi);
    };
    std::vector<std::pair<VectorField, VectorField>> pairs;
    for (int i = 0; i < 16; ++i) {
        VectorField v = random_field();
        VectorField w = random_field();
        pairs.emplace_back(std::move(v), std::move(w));
    }
    for (const TrajectoryRecord* r : runs)
        for (int k = 0; k < r->steps(); ++k) pairs.emplace_back(r->states[k + 1], r->states[k]);

    double worst = 0.0;
    bool ok = true;
    for (const auto& [v, w] : pairs) {
        const PerturbationReport p = perturbation_structure_check(v, w);
        const double scale = std::max(1.0, std::abs(p.total));
        worst = std::max({worst, std::abs(p.second_sum) / scale, p.identity_error / scale});
        ok = ok && p.ok();
    }
    return make_check("perturbation", ok, worst, 1e-12);
}

CheckResult blockage_result(const VerifyInputs& in, BlockageReport* report) {
    const SimulationConfig& c = in.config;
    BlockageReport rep =
        blockage_check(*in.runs.back(), in.ladder.base.blockage_time(), forcing_is_zero(c), c.checks.blockage_threshold);
    CheckResult out{"blockage", rep.status, rep.worst, rep.threshold, "blockage.csv"};
    if (report) *report = std::move(rep);
    return out;
}

// ---------------------------------------------------------------------------

CommandReport cmd_run(const SimulationConfig& config, const CommandOptions& opts) {
    if (auto p = config.validate(); !p.empty()) throw ConfigError(p);
    CommandReport rep;
    rep.output_dir = resolve_output_dir(config);
    RunManifest m = base_manifest("run", config);
    const double n = opts.index.value_or(largest_index(config));
    const ObstacleLadder ladder = make_ladder(config, {n});
    const double L_P = poincare_constant(ladder.lattice.grid);

    TrajectoryRecord rec;
    try {
        rec = run(config, ladder, n);
    } catch (const RunAborted& e) {
        // Keep what was computed before the failure.
        const TrajectoryRecord& part = e.partial();
        write_timeseries(part, energy_check(part, config.nu, L_P), rep.output_dir / "timeseries_partial.csv");
        throw;
    }
    const EnergyLedger led = energy_check(rec, config.nu, L_P, config.checks.energy_slack);
    write_run_outputs(rec, led, "timeseries.csv", rep.output_dir, m);
    const LadderMember& member = ladder.member(n);
    for (int k : rec.snapshot_steps) {
        char name[64];
        std::snprintf(name, sizeof name, "snapshot_%05d.vtk", k);
        write_snapshot(rec.states[k], member.slice(ladder.lattice, k), rec.times[k], rep.output_dir / name);
        m.files.push_back(name);
    }

    const VerifyInputs in{config, ladder, {&rec}};
    rep.checks.push_back(energy_result(in, L_P));
    rep.checks.back().detail = "timeseries.csv";
    rep.checks.push_back(constraint_result(in));
    rep.checks.back().detail = "timeseries.csv";
    BlockageReport block;
    rep.checks.push_back(blockage_result(in, &block));
    if (block.status == CheckStatus::NotApplicable) {
        rep.checks.back().detail.clear();
    } else {
        write_blockage(block, rep.output_dir / "blockage.csv");
        m.files.push_back("blockage.csv");
    }
    rep.summary = "ladder index " + fmt(n) + ", " + std::to_string(rec.steps()) + " steps, final |u| " +
                  short_fmt(rec.l2.back()) + "\n";
    finish(rep, m);
    rep.summary += "outputs in " + rep.output_dir.string() + "\n";
    return rep;
}

CommandReport cmd_ladder(const SimulationConfig& config, const CommandOptions&) {
    if (auto p = config.validate(); !p.empty()) throw ConfigError(p);
    const LadderRun lr = run_ladder(config);
    CommandReport rep;
    rep.output_dir = resolve_output_dir(config);
    RunManifest m = base_manifest("ladder", config);
    write_distance_matrix(lr, rep.output_dir / "distance.csv");
    m.files.push_back("distance.csv");
    const ObstacleLadder ladder = make_ladder(config, config.ladder);
    write_ladder_validation(validate_ladder(ladder, {config.checks.bv_kappa}), rep.output_dir / "ladder_validation.csv");
    m.files.push_back("ladder_validation.csv");

    double worst = 0.0;
    for (std::size_t i = 1; i < lr.cauchy.size(); ++i) worst = std::max(worst, lr.cauchy[i].second - lr.cauchy[i - 1].second);
    const bool ok = lr.cauchy_nonincreasing();
    rep.checks.push_back(make_check("ladder-cauchy", ok, worst, 0.0, "distance.csv"));
    for (const auto& [n, d] : lr.cauchy)
        rep.summary += "D(" + fmt(n) + ", next) = " + short_fmt(d) + "\n";
    rep.summary += std::string("verdict: ") + (ok ? "nonincreasing" : "not monotone") + "\n";
    finish(rep, m);
    rep.summary += "outputs in " + rep.output_dir.string() + "\n";
    return rep;
}

CommandReport cmd_verify(const SimulationConfig& config, const CommandOptions& opts) {
    if (auto p = config.validate(); !p.empty()) throw ConfigError(p);
    std::vector<std::string> selected = opts.only.empty() ? check_names() : opts.only;
    for (const auto& s : selected)
        if (std::find(check_names().begin(), check_names().end(), s) == check_names().end()) {
            std::string list;
            for (const auto& n : check_names()) list += (list.empty() ? "" : ", ") + n;
            throw ConfigError("unknown check '" + s + "' (available: " + list + ")");
        }
    auto wants = [&](const char* name) { return std::find(selected.begin(), selected.end(), name) != selected.end(); };

    CommandReport rep;
    rep.output_dir = resolve_output_dir(config);
    RunManifest m = base_manifest("verify", config);
    const ObstacleLadder ladder = make_ladder(config, config.ladder);
    const double L_P = poincare_constant(ladder.lattice.grid);

    std::vector<TrajectoryRecord> runs;
    const bool need_runs = wants("energy") || wants("constraint") || wants("vi") || wants("bv") || wants("blockage");
    if (need_runs) {
        for (double n : config.ladder) {
            runs.push_back(run(config, ladder, n));
            const std::string name = "timeseries_" + index_tag(n) + ".csv";
            write_run_outputs(runs.back(), energy_check(runs.back(), config.nu, L_P), name, rep.output_dir, m);
        }
    }
    std::vector<const TrajectoryRecord*> ptrs;
    for (const auto& r : runs) ptrs.push_back(&r);
    const VerifyInputs in{config, ladder, ptrs};

    if (wants("energy")) {
        rep.checks.push_back(energy_result(in, L_P));
        rep.checks.back().detail = "timeseries_" + index_tag(config.ladder.front()) + ".csv";
    }
    if (wants("constraint")) {
        rep.checks.push_back(constraint_result(in));
        rep.checks.back().detail = "timeseries_" + index_tag(config.ladder.front()) + ".csv";
    }
    if (wants("vi")) {
        ViResidualReport vr;
        rep.checks.push_back(vi_result(in, &vr));
        if (!vr.rows.empty()) {
            write_vi_residuals(vr, rep.output_dir / "vi_residuals.csv");
            m.files.push_back("vi_residuals.csv");
        }
    }
    if (wants("bv")) {
        const ConstantsReport constants = embedding_constants(ladder.lattice.grid, opts.constants_restarts);
        write_constants(constants, rep.output_dir / "constants.csv");
        m.files.push_back("constants.csv");
        BvReport br;
        rep.checks.push_back(bv_result(in, constants, &br));
        if (!br.runs.empty()) {
            write_bv_report(br, rep.output_dir / "bv.csv");
            m.files.push_back("bv.csv");
        }
    }
    if (wants("perturbation")) rep.checks.push_back(perturbation_result(config, ptrs));
    if (wants("blockage")) {
        BlockageReport block;
        rep.checks.push_back(blockage_result(in, &block));
        if (block.status == CheckStatus::NotApplicable) {
            rep.checks.back().detail.clear();
        } else {
            write_blockage(block, rep.output_dir / "blockage.csv");
            m.files.push_back("blockage.csv");
        }
    }
    write_check_summary_csv(rep.checks, rep.output_dir / "checks.csv");
    write_check_summary_json(rep.checks, rep.output_dir / "checks.json");
    m.files.push_back("checks.csv");
    m.files.push_back("checks.json");
    finish(rep, m);
    rep.summary += "outputs in " + rep.output_dir.string() + "\n";
    return rep;
}

CommandReport cmd_constants(const SimulationConfig& config, const CommandOptions& opts) {
    if (auto p = config.validate(); !p.empty()) throw ConfigError(p);
    CommandReport rep;
    rep.output_dir = resolve_output_dir(config);
    RunManifest m = base_manifest("constants", config);
    const ConstantsReport c = embedding_constants(config.grid.make(), opts.constants_restarts);
    write_constants(c, rep.output_dir / "constants.csv");
    m.files.push_back("constants.csv");
    for (const auto& e : c.entries) rep.summary += e.name + " = " + short_fmt(e.value) + " (" + e.method + ")\n";
    finish(rep, m);
    rep.summary += "outputs in " + rep.output_dir.string() + "\n";
    return rep;
}

}  // namespace nsvi
