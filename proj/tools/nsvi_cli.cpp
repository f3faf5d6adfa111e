// nsvi: command-line front end over the C interface.
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nsvi/nsvi.h"

namespace {

struct ScenarioArgs {
    std::string path;
    std::vector<std::string> overrides;
};

void add_scenario_args(CLI::App* cmd, ScenarioArgs& a) {
    cmd->add_option("scenario", a.path, "Scenario file")->required();
    cmd->add_option("--set", a.overrides, "Override a scenario value, e.g. --set time.tau=0.001")
        ->type_name("KEY=VALUE");
}

int report_error(nsvi_status s) {
    std::fprintf(stderr, "error: %s\n", nsvi_last_error());
    return nsvi_exit_code(s);
}

/// Loads the scenario and applies overrides. Returns nullptr after printing the error.
nsvi_config* load(const ScenarioArgs& a, int& code) {
    nsvi_config* cfg = nullptr;
    nsvi_status s = nsvi_config_load(a.path.c_str(), &cfg);
    if (s != NSVI_OK) {
        code = report_error(s);
        return nullptr;
    }
    for (const auto& o : a.overrides) {
        s = nsvi_config_set(cfg, o.c_str());
        if (s != NSVI_OK) {
            nsvi_config_free(cfg);
            code = report_error(s);
            return nullptr;
        }
    }
    s = nsvi_config_validate(cfg);
    if (s != NSVI_OK) {
        nsvi_config_free(cfg);
        code = report_error(s);
        return nullptr;
    }
    return cfg;
}

int execute(const ScenarioArgs& a, nsvi_command_options opts, bool verbose) {
    int code = 0;
    nsvi_config* cfg = load(a, code);
    if (!cfg) return code;
    if (verbose) {
        size_t needed = 0;
        nsvi_config_serialize(cfg, nullptr, 0, &needed);
        std::string text(needed, '\0');
        if (nsvi_config_serialize(cfg, text.data(), text.size(), &needed) == NSVI_OK)
            std::printf("# effective scenario\n%s\n", text.c_str());
    }
    nsvi_report* rep = nullptr;
    const nsvi_status s = nsvi_command(cfg, &opts, &rep);
    nsvi_config_free(cfg);
    if (s != NSVI_OK) return report_error(s);
    std::fputs(nsvi_report_summary(rep), stdout);
    std::fflush(stdout);
    int result = 0;
    if (!nsvi_report_passed(rep)) {
        const std::string path = nsvi_report_failing_path(rep);
        std::fprintf(stderr, "check failed%s%s\n", path.empty() ? "" : ", see ", path.c_str());
        result = 2;
    }
    nsvi_report_free(rep);
    return result;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Navier-Stokes flow under a time-dependent velocity obstacle"};
    app.set_version_flag("--version", std::string(nsvi_version()));
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Print the effective scenario before running");

    ScenarioArgs run_args;
    double index = 0.0;
    CLI::App* run = app.add_subcommand("run", "Run one ladder member and write the timeseries, snapshots and manifest");
    add_scenario_args(run, run_args);
    run->add_option("--index", index, "Ladder index to run (default: the largest)");

    ScenarioArgs ladder_args;
    CLI::App* ladder = app.add_subcommand("ladder", "Run every ladder member and report D(n, 2n)");
    add_scenario_args(ladder, ladder_args);

    ScenarioArgs verify_args;
    std::vector<std::string> only;
    CLI::App* verify = app.add_subcommand("verify", "Run the diagnostics suite");
    add_scenario_args(verify, verify_args);
    verify->add_option("--only", only, "Run only these checks (energy, constraint, vi, bv, perturbation, blockage)")
        ->delimiter(',');

    ScenarioArgs constants_args;
    CLI::App* constants = app.add_subcommand("constants", "Estimate the embedding constants for the scenario grid");
    add_scenario_args(constants, constants_args);

    std::vector<double> proj;
    CLI::App* project = app.add_subcommand("project", "Project the vector (x, y) onto the disk of radius r");
    project->add_option("values", proj, "x y r")->expected(3)->required()->allow_extra_args(false);

    CLI11_PARSE(app, argc, argv);

    std::string only_joined;
    for (const auto& o : only) only_joined += (only_joined.empty() ? "" : ",") + o;

    if (*run) return execute(run_args, {NSVI_CMD_RUN, index, nullptr}, verbose);
    if (*ladder) return execute(ladder_args, {NSVI_CMD_LADDER, 0.0, nullptr}, verbose);
    if (*verify) return execute(verify_args, {NSVI_CMD_VERIFY, 0.0, only_joined.c_str()}, verbose);
    if (*constants) return execute(constants_args, {NSVI_CMD_CONSTANTS, 0.0, nullptr}, verbose);
    if (*project) {
        double out[2];
        const nsvi_status s = nsvi_project(proj[0], proj[1], proj[2], out);
        if (s != NSVI_OK) return report_error(s);
        std::printf("%.15g %.15g\n", out[0] + 0.0, out[1] + 0.0);
        return 0;
    }
    return 1;
}
