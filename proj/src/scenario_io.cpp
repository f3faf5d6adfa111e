#include "nsvi/scenario_io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "nsvi/error.hpp"

namespace nsvi {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

bool is_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
    return k.front() != '.' && k.back() != '.';
}

/// Strip a trailing comment outside quotes.
std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

/// Parses a value; `bare_strings` accepts unquoted text as a string.
std::optional<ScenarioValue> parse_value(const std::string& raw, bool bare_strings, std::string& why) {
    const std::string s = trim(raw);
    ScenarioValue out;
    if (s.empty()) {
        why = "missing value";
        return std::nullopt;
    }
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"' || s.find('"', 1) != s.size() - 1) {
            why = "unterminated string";
            return std::nullopt;
        }
        out.value = s.substr(1, s.size() - 2);
        return out;
    }
    if (s.front() == '[') {
        if (s.back() != ']') {
            why = "unterminated array";
            return std::nullopt;
        }
        std::vector<double> arr;
        const std::string body = trim(s.substr(1, s.size() - 2));
        if (!body.empty()) {
            std::stringstream ss(body);
            std::string item;
            while (std::getline(ss, item, ',')) {
                const auto v = parse_number(trim(item));
                if (!v) {
                    why = "array entries must be numbers";
                    return std::nullopt;
                }
                arr.push_back(*v);
            }
        }
        out.value = std::move(arr);
        return out;
    }
    if (auto v = parse_number(s)) {
        out.value = *v;
        return out;
    }
    if (bare_strings) {
        out.value = s;
        return out;
    }
    why = "cannot parse value '" + s + "' (strings need double quotes)";
    return std::nullopt;
}

std::string format_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string format_array(const std::vector<double>& a) {
    std::string s = "[";
    for (std::size_t i = 0; i < a.size(); ++i) s += (i ? ", " : "") + format_number(a[i]);
    return s + "]";
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

// Conversion ----------------------------------------------------------------

class Converter {
public:
    explicit Converter(const ScenarioDocument& doc) : doc_(doc) {}

    void number(const std::string& key, double& dst, bool required = false) {
        const ScenarioValue* v = find(key, required);
        if (!v) return;
        if (auto d = std::get_if<double>(&v->value)) {
            dst = *d;
        } else {
            problem(key, "expected a number");
        }
    }

    void integer(const std::string& key, int& dst, bool required = false) {
        double d = dst;
        const std::size_t before = problems_.size();
        number(key, d, required);
        if (problems_.size() != before || !doc_.entries.count(key)) return;
        if (d != std::floor(d) || std::abs(d) > 1e9) {
            problem(key, "expected an integer");
            return;
        }
        dst = static_cast<int>(d);
    }

    void string(const std::string& key, std::string& dst, bool required = false) {
        const ScenarioValue* v = find(key, required);
        if (!v) return;
        if (auto s = std::get_if<std::string>(&v->value)) {
            dst = *s;
        } else {
            problem(key, "expected a quoted string");
        }
    }

    void array(const std::string& key, std::vector<double>& dst, bool required = false) {
        const ScenarioValue* v = find(key, required);
        if (!v) return;
        if (auto a = std::get_if<std::vector<double>>(&v->value)) {
            dst = *a;
        } else {
            problem(key, "expected an array of numbers");
        }
    }

    /// Preset plus numeric parameters of a section.
    void preset_section(const std::string& section, std::string& preset, ParamMap& params, bool required) {
        string(section + ".preset", preset, required);
        const std::string prefix = section + ".";
        for (const auto& [key, val] : doc_.entries) {
            if (key.rfind(prefix, 0) != 0 || key == prefix + "preset") continue;
            used_.insert(key);
            const std::string name = key.substr(prefix.size());
            if (name.find('.') != std::string::npos) {
                problem(key, "unknown key");
                continue;
            }
            if (auto d = std::get_if<double>(&val.value)) {
                params[name] = *d;
            } else {
                problem(key, "parameters must be numbers");
            }
        }
    }

    void reject_unused() {
        for (const auto& [key, val] : doc_.entries)
            if (!used_.count(key)) problem(key, "unknown key");
    }

    /// Attach the line of the longest key that prefixes the message.
    void add_validation(const std::string& msg) {
        std::string best;
        for (const auto& [key, val] : doc_.entries)
            if (msg.rfind(key, 0) == 0 && key.size() > best.size()) best = key;
        // A section whose keys did not convert would only add follow-on noise here.
        if (broken_.count(msg.substr(0, msg.find_first_of(". :")))) return;
        problems_.push_back(best.empty() ? msg : where(best) + msg);
    }

    std::vector<std::string>& problems() { return problems_; }

private:
    const ScenarioValue* find(const std::string& key, bool required) {
        used_.insert(key);
        auto it = doc_.entries.find(key);
        if (it == doc_.entries.end()) {
            if (required) {
                problems_.push_back(key + ": missing required key");
                broken_.insert(section_of(key));
            }
            return nullptr;
        }
        return &it->second;
    }

    std::string where(const std::string& key) const {
        const auto it = doc_.entries.find(key);
        if (it == doc_.entries.end() || it->second.line == 0) return "";
        return doc_.source + ":" + std::to_string(it->second.line) + ": ";
    }

    void problem(const std::string& key, const std::string& what) {
        problems_.push_back(where(key) + key + ": " + what);
        broken_.insert(section_of(key));
    }

    static std::string section_of(const std::string& key) { return key.substr(0, key.find('.')); }

    const ScenarioDocument& doc_;
    std::set<std::string> used_;
    std::set<std::string> broken_;
    std::vector<std::string> problems_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError(path.parent_path().string(), ec.message());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    out << text;
    out.close();
    if (!out) throw IoError(path.string(), "write failed");
}

std::string csv_line(std::initializer_list<std::string> cells) {
    std::string s;
    bool first = true;
    for (const auto& c : cells) {
        if (!first) s += ',';
        s += c;
        first = false;
    }
    return s + "\n";
}

}  // namespace

// ---------------------------------------------------------------------------

ScenarioDocument parse_scenario_text(const std::string& text, const std::string& source) {
    ScenarioDocument doc;
    doc.source = source;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int lineno = 0;
    auto error = [&](const std::string& msg) { doc.errors.push_back(source + ":" + std::to_string(lineno) + ": " + msg); };
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                error("malformed section header");
                continue;
            }
            section = trim(line.substr(1, line.size() - 2));
            if (!is_key(section)) error("malformed section name '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            error("expected key = value");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        if (!is_key(key)) {
            error("malformed key '" + key + "'");
            continue;
        }
        const std::string full = section.empty() ? key : section + "." + key;
        std::string why;
        auto val = parse_value(line.substr(eq + 1), false, why);
        if (!val) {
            error(full + ": " + why);
            continue;
        }
        val->line = lineno;
        if (!doc.entries.emplace(full, *val).second) error(full + ": duplicate key");
    }
    return doc;
}

ScenarioDocument read_scenario_document(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open scenario file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario_text(ss.str(), path.string());
}

void apply_override(ScenarioDocument& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' must have the form key=value");
    const std::string key = trim(assignment.substr(0, eq));
    if (!is_key(key) || key.find('.') == std::string::npos)
        throw ConfigError("override '" + assignment + "' needs a dotted key such as time.tau");
    std::string why;
    auto val = parse_value(assignment.substr(eq + 1), true, why);
    if (!val) throw ConfigError("override " + key + ": " + why);
    val->line = 0;
    doc.entries[key] = *val;
}

SimulationConfig to_config(const ScenarioDocument& doc) {
    SimulationConfig c;
    Converter cv(doc);
    cv.integer("grid.nx", c.grid.nx, true);
    cv.integer("grid.ny", c.grid.ny, true);
    cv.number("grid.lx", c.grid.lx);
    cv.number("grid.ly", c.grid.ly);
    cv.number("time.tau", c.time.tau, true);
    cv.number("time.t_final", c.time.t_final, true);
    cv.number("physics.nu", c.nu, true);
    cv.preset_section("obstacle", c.obstacle.preset, c.obstacle.params, true);
    cv.array("ladder.indices", c.ladder, true);
    cv.preset_section("forcing", c.forcing.preset, c.forcing.params, false);
    cv.preset_section("initial", c.initial.preset, c.initial.params, false);
    cv.integer("outputs.cadence", c.outputs.cadence);
    cv.string("outputs.directory", c.outputs.directory);
    cv.number("tolerances.rho", c.tolerances.rho);
    cv.integer("tolerances.max_iter", c.tolerances.max_iter);
    cv.number("tolerances.feas_tol", c.tolerances.feas_tol);
    cv.number("tolerances.kkt_tol", c.tolerances.kkt_tol);
    cv.number("tolerances.relaxation", c.tolerances.relaxation);
    CheckSpec& k = c.checks;
    cv.number("checks.energy_slack", k.energy_slack);
    cv.number("checks.constraint_slack", k.constraint_slack);
    cv.number("checks.vi_slack", k.vi_slack);
    cv.number("checks.blockage_threshold", k.blockage_threshold);
    cv.number("checks.bv_kappa", k.bv_kappa);
    cv.array("checks.bv_box", k.bv_box);
    cv.array("checks.bv_window", k.bv_window);
    cv.integer("checks.family_bumps", k.family_bumps);
    cv.number("checks.family_radius", k.family_radius);
    cv.number("checks.family_amplitude", k.family_amplitude);
    cv.integer("checks.vi_checkpoints", k.vi_checkpoints);
    cv.reject_unused();

    // Validation runs on whatever converted cleanly, so one pass reports everything.
    for (const auto& p : c.validate()) cv.add_validation(p);
    std::vector<std::string> problems = doc.errors;
    for (auto& p : cv.problems()) problems.push_back(p);
    if (!problems.empty()) throw ConfigError(problems);
    return c;
}

SimulationConfig parse_scenario(const std::filesystem::path& path) { return to_config(read_scenario_document(path)); }

std::string serialize_scenario(const SimulationConfig& c) {
    std::ostringstream os;
    auto kv = [&](const std::string& k, const std::string& v) { os << k << " = " << v << "\n"; };
    auto params = [&](const ParamMap& m) {
        for (const auto& [k, v] : m) kv(k, format_number(v));
    };
    os << "[grid]\n";
    kv("nx", std::to_string(c.grid.nx));
    kv("ny", std::to_string(c.grid.ny));
    kv("lx", format_number(c.grid.lx));
    kv("ly", format_number(c.grid.ly));
    os << "\n[time]\n";
    kv("tau", format_number(c.time.tau));
    kv("t_final", format_number(c.time.t_final));
    os << "\n[physics]\n";
    kv("nu", format_number(c.nu));
    os << "\n[obstacle]\n";
    kv("preset", quote(c.obstacle.preset));
    params(c.obstacle.params);
    os << "\n[ladder]\n";
    kv("indices", format_array(c.ladder));
    os << "\n[forcing]\n";
    kv("preset", quote(c.forcing.preset));
    params(c.forcing.params);
    os << "\n[initial]\n";
    kv("preset", quote(c.initial.preset));
    params(c.initial.params);
    os << "\n[outputs]\n";
    kv("cadence", std::to_string(c.outputs.cadence));
    kv("directory", quote(c.outputs.directory));
    os << "\n[tolerances]\n";
    kv("rho", format_number(c.tolerances.rho));
    kv("max_iter", std::to_string(c.tolerances.max_iter));
    kv("feas_tol", format_number(c.tolerances.feas_tol));
    kv("kkt_tol", format_number(c.tolerances.kkt_tol));
    kv("relaxation", format_number(c.tolerances.relaxation));
    const CheckSpec& k = c.checks;
    os << "\n[checks]\n";
    kv("energy_slack", format_number(k.energy_slack));
    kv("constraint_slack", format_number(k.constraint_slack));
    kv("vi_slack", format_number(k.vi_slack));
    kv("blockage_threshold", format_number(k.blockage_threshold));
    kv("bv_kappa", format_number(k.bv_kappa));
    kv("bv_box", format_array(k.bv_box));
    kv("bv_window", format_array(k.bv_window));
    kv("family_bumps", std::to_string(k.family_bumps));
    kv("family_radius", format_number(k.family_radius));
    kv("family_amplitude", format_number(k.family_amplitude));
    kv("vi_checkpoints", std::to_string(k.vi_checkpoints));
    return os.str();
}

std::string config_hash(const SimulationConfig& config) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : serialize_scenario(config)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::filesystem::path resolve_output_dir(const SimulationConfig& config) {
    std::filesystem::path dir(config.outputs.directory);
    if (dir.is_relative()) {
        if (const char* root = std::getenv("NSVI_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / dir;
    }
    return dir;
}

// ---------------------------------------------------------------------------

void write_snapshot(const VectorField& u, const std::vector<double>& p_n, double time,
                    const std::filesystem::path& path) {
    const MacGrid& g = u.grid();
    const int nc = g.num_cells();
    if (!p_n.empty() && static_cast<int>(p_n.size()) != nc) throw DomainError("obstacle slice does not match the grid");
    const Eigen::VectorXd w = reconstruct_cells(u);
    std::ostringstream os;
    os << "# vtk DataFile Version 3.0\n";
    os << "nsvi velocity t=" << format_number(time) << "\n";
    os << "ASCII\nDATASET STRUCTURED_POINTS\n";
    os << "DIMENSIONS " << g.nx() << " " << g.ny() << " 1\n";
    os << "ORIGIN " << format_number(0.5 * g.h()) << " " << format_number(0.5 * g.h()) << " 0\n";
    os << "SPACING " << format_number(g.h()) << " " << format_number(g.h()) << " 1\n";
    os << "POINT_DATA " << nc << "\n";
    os << "VECTORS velocity double\n";
    for (int c = 0; c < nc; ++c) os << format_number(w[2 * c]) << " " << format_number(w[2 * c + 1]) << " 0\n";
    os << "SCALARS obstacle double 1\nLOOKUP_TABLE default\n";
    for (int c = 0; c < nc; ++c) os << (p_n.empty() ? std::string("inf") : format_number(p_n[c])) << "\n";
    os << "SCALARS speed double 1\nLOOKUP_TABLE default\n";
    for (int c = 0; c < nc; ++c) os << format_number(std::hypot(w[2 * c], w[2 * c + 1])) << "\n";
    write_text(path, os.str());
}

VtkHeader read_vtk_header(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string(), "cannot open snapshot");
    VtkHeader h;
    std::string line;
    bool dims = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "DIMENSIONS") {
            ls >> h.dimensions[0] >> h.dimensions[1] >> h.dimensions[2];
            dims = true;
        } else if (word == "SPACING") {
            ls >> h.spacing[0] >> h.spacing[1] >> h.spacing[2];
        } else if (word == "ORIGIN") {
            ls >> h.origin[0] >> h.origin[1] >> h.origin[2];
        } else if (word == "POINT_DATA") {
            ls >> h.point_count;
            break;
        } else if (word == "nsvi") {
            const auto pos = line.find("t=");
            if (pos != std::string::npos) h.time = std::strtod(line.c_str() + pos + 2, nullptr);
        }
    }
    if (!dims || h.point_count <= 0) throw IoError(path.string(), "malformed VTK header");
    return h;
}

void write_timeseries(const TrajectoryRecord& traj, const EnergyLedger& ledger, const std::filesystem::path& path) {
    if (ledger.lhs.size() != traj.states.size()) throw DomainError("energy ledger does not match the trajectory");
    std::string s = "t,l2_norm,h1_seminorm,energy_lhs,M0,constraint_violation,step_iters,step_residual,dissipation\n";
    for (int k = 0; k <= traj.steps(); ++k)
        s += csv_line({format_number(traj.times[k]), format_number(traj.l2[k]), format_number(traj.h1[k]),
                       format_number(ledger.lhs[k]), format_number(ledger.M0), format_number(traj.violation[k]),
                       std::to_string(traj.iterations[k]), format_number(traj.residual[k]),
                       format_number(ledger.dissipation[k])});
    write_text(path, s);
}

void write_ladder_validation(const LadderValidation& v, const std::filesystem::path& path) {
    std::string s = "n,kappa,sup_distance,sandwich_ok\n";
    for (const auto& r : v.rows)
        s += csv_line({format_number(r.n), format_number(r.kappa), format_number(r.sup_distance),
                       r.sandwich_ok ? "true" : "false"});
    write_text(path, s);
}

void write_distance_matrix(const LadderRun& run, const std::filesystem::path& path) {
    std::string s = "n_i,n_j,distance\n";
    for (std::size_t i = 0; i < run.indices.size(); ++i)
        for (std::size_t j = 0; j < run.indices.size(); ++j)
            s += csv_line({format_number(run.indices[i]), format_number(run.indices[j]), format_number(run.distance[i][j])});
    write_text(path, s);
}

void write_constants(const ConstantsReport& c, const std::filesystem::path& path) {
    std::string s = "name,value,method,iters\n";
    for (const auto& e : c.entries)
        s += csv_line({e.name, format_number(e.value), e.method, std::to_string(e.iterations)});
    write_text(path, s);
}

void write_vi_residuals(const ViResidualReport& r, const std::filesystem::path& path) {
    std::string s = "member,t,lhs,rhs,residual\n";
    for (const auto& row : r.rows)
        s += csv_line({row.label, format_number(row.t), format_number(row.lhs), format_number(row.rhs),
                       format_number(row.residual())});
    write_text(path, s);
}

void write_bv_report(const BvReport& r, const std::filesystem::path& path) {
    std::ostringstream os;
    // Discrete difference quotients stand in for the distributional derivative.
    os << "# box=" << format_array(r.box) << " window=[" << format_number(r.t1) << ", " << format_number(r.t2)
       << "] kappa=" << format_number(r.kappa) << " M_kappa=" << format_number(r.bound.M_kappa)
       << " (discrete constant surrogates)\n";
    os << "n,tv,M_kappa,ok\n";
    for (const auto& run : r.runs)
        os << csv_line({format_number(run.n), format_number(run.tv), format_number(r.bound.M_kappa),
                        run.tv <= r.bound.M_kappa ? "true" : "false"});
    write_text(path, os.str());
}

void write_blockage(const BlockageReport& r, const std::filesystem::path& path) {
    std::string s = "t,l2_norm\n";
    for (const auto& [t, v] : r.decay) s += csv_line({format_number(t), format_number(v)});
    write_text(path, s);
}

void write_check_summary_csv(const std::vector<CheckResult>& checks, const std::filesystem::path& path) {
    std::string s = "check,status,worst,threshold\n";
    for (const auto& c : checks)
        s += csv_line({c.name, to_string(c.status), format_number(c.worst), format_number(c.threshold)});
    write_text(path, s);
}

namespace {

nlohmann::ordered_json check_json(const CheckResult& c) {
    nlohmann::ordered_json j;
    j["check"] = c.name;
    j["status"] = to_string(c.status);
    j["worst"] = std::isfinite(c.worst) ? nlohmann::ordered_json(c.worst) : nlohmann::ordered_json(format_number(c.worst));
    j["threshold"] = c.threshold;
    if (!c.detail.empty()) j["detail"] = c.detail;
    return j;
}

}  // namespace

void write_check_summary_json(const std::vector<CheckResult>& checks, const std::filesystem::path& path) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& c : checks) arr.push_back(check_json(c));
    write_text(path, arr.dump(2) + "\n");
}

std::optional<std::int64_t> manifest_timestamp() {
    const char* s = std::getenv("SOURCE_DATE_EPOCH");
    if (!s || !*s) return std::nullopt;
    char* end = nullptr;
    const long long v = std::strtoll(s, &end, 10);
    if (*end != '\0') return std::nullopt;
    return static_cast<std::int64_t>(v);
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["command"] = m.command;
    j["config_hash"] = m.config_hash;
    j["version"] = m.version;
    j["timestamp"] = m.timestamp ? nlohmann::ordered_json(*m.timestamp) : nlohmann::ordered_json(nullptr);
    nlohmann::ordered_json checks = nlohmann::ordered_json::array();
    for (const auto& c : m.checks) checks.push_back(check_json(c));
    j["checks"] = checks;
    j["files"] = m.files;
    write_text(path, j.dump(2) + "\n");
}

}  // namespace nsvi
