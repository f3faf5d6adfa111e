#include "nsvi/nsvi.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <optional>
#include <sstream>
#include <string>

#include "nsvi/driver.hpp"
#include "nsvi/error.hpp"
#include "nsvi/scenario_io.hpp"
#include "nsvi/stepper.hpp"
#include "nsvi/vi_step.hpp"

struct nsvi_config {
    nsvi::ScenarioDocument doc;
};

struct nsvi_trajectory {
    nsvi::TrajectoryRecord rec;
};

struct nsvi_report {
    nsvi::CommandReport rep;
    std::string output_dir;
};

namespace {

thread_local std::string last_error;

nsvi_status fail(nsvi_status s, std::string msg) {
    last_error = std::move(msg);
    return s;
}

nsvi_status status_of(nsvi::ErrorKind k) {
    switch (k) {
        case nsvi::ErrorKind::Config: return NSVI_ERR_CONFIG;
        case nsvi::ErrorKind::Domain: return NSVI_ERR_DOMAIN;
        case nsvi::ErrorKind::Numerical: return NSVI_ERR_NUMERICAL;
        case nsvi::ErrorKind::Io: return NSVI_ERR_IO;
        case nsvi::ErrorKind::Invariant: return NSVI_ERR_INVARIANT;
    }
    return NSVI_ERR_INTERNAL;
}

/// Runs fn and maps exceptions to status codes; nothing escapes the C boundary.
template <class Fn>
nsvi_status guarded(Fn&& fn) {
    try {
        last_error.clear();
        return fn();
    } catch (const nsvi::NumericalError& e) {
        std::ostringstream os;
        os << e.what();
        for (const auto& [name, value] : e.residuals()) os << "\n  " << name << " = " << value;
        return fail(NSVI_ERR_NUMERICAL, os.str());
    } catch (const nsvi::Error& e) {
        return fail(status_of(e.kind()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(NSVI_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(NSVI_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(NSVI_ERR_INTERNAL, "unknown error");
    }
}

}  // namespace

extern "C" {

const char* nsvi_last_error(void) { return last_error.c_str(); }

const char* nsvi_version(void) { return NSVI_VERSION; }

int nsvi_exit_code(nsvi_status status) {
    switch (status) {
        case NSVI_OK: return 0;
        case NSVI_ERR_CONFIG:
        case NSVI_ERR_IO:
        case NSVI_ERR_INVALID_ARGUMENT: return 1;
        default: return 2;
    }
}

nsvi_status nsvi_config_load(const char* path, nsvi_config** out) {
    if (!path || !out) return fail(NSVI_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] {
        auto cfg = std::make_unique<nsvi_config>();
        cfg->doc = nsvi::read_scenario_document(path);
        *out = cfg.release();
        return NSVI_OK;
    });
}

nsvi_status nsvi_config_parse(const char* text, nsvi_config** out) {
    if (!text || !out) return fail(NSVI_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] {
        auto cfg = std::make_unique<nsvi_config>();
        cfg->doc = nsvi::parse_scenario_text(text);
        *out = cfg.release();
        return NSVI_OK;
    });
}

nsvi_status nsvi_config_set(nsvi_config* cfg, const char* assignment) {
    if (!cfg || !assignment) return fail(NSVI_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        nsvi::apply_override(cfg->doc, assignment);
        return NSVI_OK;
    });
}

nsvi_status nsvi_config_validate(const nsvi_config* cfg) {
    if (!cfg) return fail(NSVI_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        (void)nsvi::to_config(cfg->doc);
        return NSVI_OK;
    });
}

nsvi_status nsvi_config_serialize(const nsvi_config* cfg, char* buf, size_t cap, size_t* needed) {
    if (!cfg || !needed) return fail(NSVI_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        const std::string text = nsvi::serialize_scenario(nsvi::to_config(cfg->doc));
        *needed = text.size() + 1;
        if (!buf || cap < text.size() + 1) return fail(NSVI_ERR_BUFFER_TOO_SMALL, "buffer too small");
        std::memcpy(buf, text.c_str(), text.size() + 1);
        return NSVI_OK;
    });
}

void nsvi_config_free(nsvi_config* cfg) { delete cfg; }

nsvi_status nsvi_run(const nsvi_config* cfg, double index, nsvi_trajectory** out) {
    if (!cfg || !out) return fail(NSVI_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] {
        const nsvi::SimulationConfig c = nsvi::to_config(cfg->doc);
        double n = index;
        if (!(n > 0)) n = *std::max_element(c.ladder.begin(), c.ladder.end());
        auto t = std::make_unique<nsvi_trajectory>();
        t->rec = nsvi::run(c, n);
        *out = t.release();
        return NSVI_OK;
    });
}

nsvi_status nsvi_trajectory_steps(const nsvi_trajectory* traj, int* steps) {
    if (!traj || !steps) return fail(NSVI_ERR_INVALID_ARGUMENT, "null argument");
    *steps = traj->rec.steps();
    return NSVI_OK;
}

nsvi_status nsvi_trajectory_sample(const nsvi_trajectory* traj, int k, nsvi_sample* out) {
    if (!traj || !out) return fail(NSVI_ERR_INVALID_ARGUMENT, "null argument");
    const nsvi::TrajectoryRecord& r = traj->rec;
    if (k < 0 || k > r.steps()) return fail(NSVI_ERR_DOMAIN, "step index out of range");
    *out = nsvi_sample{r.times[k], r.l2[k], r.h1[k], r.violation[k], r.iterations[k], r.residual[k]};
    return NSVI_OK;
}

nsvi_status nsvi_trajectory_velocity(const nsvi_trajectory* traj, int k, double* dofs, size_t cap, size_t* count) {
    if (!traj || !count) return fail(NSVI_ERR_INVALID_ARGUMENT, "null argument");
    const nsvi::TrajectoryRecord& r = traj->rec;
    if (k < 0 || k > r.steps()) return fail(NSVI_ERR_DOMAIN, "step index out of range");
    const Eigen::VectorXd& d = r.states[k].dofs();
    *count = static_cast<size_t>(d.size());
    if (!dofs) return NSVI_OK;
    if (cap < *count) return fail(NSVI_ERR_BUFFER_TOO_SMALL, "buffer too small");
    std::memcpy(dofs, d.data(), sizeof(double) * *count);
    return NSVI_OK;
}

void nsvi_trajectory_free(nsvi_trajectory* traj) { delete traj; }

nsvi_status nsvi_command(const nsvi_config* cfg, const nsvi_command_options* opts, nsvi_report** out) {
    if (!cfg || !opts || !out) return fail(NSVI_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] {
        const nsvi::SimulationConfig c = nsvi::to_config(cfg->doc);
        nsvi::CommandOptions o;
        if (opts->index > 0) o.index = opts->index;
        if (opts->only && *opts->only) {
            std::stringstream ss(opts->only);
            std::string item;
            while (std::getline(ss, item, ','))
                if (!item.empty()) o.only.push_back(item);
        }
        auto r = std::make_unique<nsvi_report>();
        switch (opts->kind) {
            case NSVI_CMD_RUN: r->rep = nsvi::cmd_run(c, o); break;
            case NSVI_CMD_LADDER: r->rep = nsvi::cmd_ladder(c, o); break;
            case NSVI_CMD_VERIFY: r->rep = nsvi::cmd_verify(c, o); break;
            case NSVI_CMD_CONSTANTS: r->rep = nsvi::cmd_constants(c, o); break;
            default: return fail(NSVI_ERR_INVALID_ARGUMENT, "unknown command");
        }
        r->output_dir = r->rep.output_dir.string();
        *out = r.release();
        return NSVI_OK;
    });
}

int nsvi_report_passed(const nsvi_report* rep) { return rep && rep->rep.passed ? 1 : 0; }

const char* nsvi_report_summary(const nsvi_report* rep) { return rep ? rep->rep.summary.c_str() : ""; }

const char* nsvi_report_output_dir(const nsvi_report* rep) { return rep ? rep->output_dir.c_str() : ""; }

const char* nsvi_report_failing_path(const nsvi_report* rep) { return rep ? rep->rep.failing_report.c_str() : ""; }

void nsvi_report_free(nsvi_report* rep) { delete rep; }

nsvi_status nsvi_project(double x, double y, double radius, double out[2]) {
    if (!out) return fail(NSVI_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        const auto p = nsvi::ball_project({x, y}, radius);
        out[0] = p[0];
        out[1] = p[1];
        return NSVI_OK;
    });
}

}  // extern "C"
