#include "pfopt/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

using nlohmann::json;

namespace pfopt {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("config: " + msg); }

void check_keys(const json& j, const std::string& scope,
                std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok) fail("unknown key '" + (scope.empty() ? it.key() : scope + "." + it.key()) + "'");
    }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

void get_vec2(const json& j, const char* key, Eigen::Vector2d& out) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2) fail(std::string("field '") + key + "' must be [x, y]");
    out.x() = a[0].get<double>();
    out.y() = a[1].get<double>();
}

json vec2(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }

std::vector<ScheduleStage> parse_stages(const json& a, const std::string& scope) {
    std::vector<ScheduleStage> out;
    for (const auto& e : a) {
        check_keys(e, scope, {"value", "steps"});
        ScheduleStage s;
        get_to(e, "value", s.value);
        get_to(e, "steps", s.steps);
        out.push_back(s);
    }
    return out;
}

json dump_stages(const std::vector<ScheduleStage>& v) {
    json a = json::array();
    for (const auto& s : v) a.push_back({{"value", s.value}, {"steps", s.steps}});
    return a;
}

std::pair<int, int> line_col(const std::string& text, size_t byte) {
    int line = 1, col = 1;
    for (size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') { ++line; col = 1; }
        else ++col;
    }
    return {line, col};
}

void apply_env_overrides(json& j) {
    // PFOPT_<SECTION>_<KEY> (or PFOPT_<KEY> at top level), value parsed as JSON
    static const struct { const char* env; const char* section; const char* key; } table[] = {
        {"PFOPT_WIDTH", nullptr, "width"},
        {"PFOPT_HEIGHT", nullptr, "height"},
        {"PFOPT_SEED", nullptr, "seed"},
        {"PFOPT_MESH_H0", "mesh", "h0"},
        {"PFOPT_MESH_ADAPT_EVERY", "mesh", "adapt_every"},
        {"PFOPT_MESH_DORFLER", "mesh", "dorfler"},
        {"PFOPT_MESH_MIN_H", "mesh", "min_h"},
        {"PFOPT_MESH_MAX_TRIANGLES", "mesh", "max_triangles"},
        {"PFOPT_MODEL_EPS", "model", "eps"},
        {"PFOPT_MODEL_ALPHA_BAR", "model", "alpha_bar"},
        {"PFOPT_MODEL_MU", "model", "mu"},
        {"PFOPT_MODEL_GAMMA", "model", "gamma"},
        {"PFOPT_MODEL_S", "model", "s"},
        {"PFOPT_MODEL_THETA", "model", "theta"},
        {"PFOPT_MODEL_DELTA_EPS", "model", "delta_eps"},
        {"PFOPT_MODEL_MODULATION", "model", "modulation"},
        {"PFOPT_MODEL_FOLD_C0", "model", "fold_c0"},
        {"PFOPT_FUNCTIONAL_TYPE", "functional", "type"},
        {"PFOPT_STEPPING_XI", "stepping", "xi"},
        {"PFOPT_STEPPING_TAU_MAX", "stepping", "tau_max"},
        {"PFOPT_STEPPING_MAX_STEPS", "stepping", "max_steps"},
        {"PFOPT_STEPPING_STAGNATION_TOL", "stepping", "stagnation_tol"},
        {"PFOPT_OUTPUT_DIR", "output", "dir"},
        {"PFOPT_OUTPUT_VTK_EVERY", "output", "vtk_every"},
    };
    for (const auto& row : table) {
        const char* v = std::getenv(row.env);
        if (!v) continue;
        json parsed;
        try {
            parsed = json::parse(v);
        } catch (const json::parse_error&) {
            parsed = std::string(v);  // bare strings allowed
        }
        if (row.section)
            j[row.section][row.key] = parsed;
        else
            j[row.key] = parsed;
    }
}

}  // namespace

void RunConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0)) fail(std::string("field '") + name + "' must be positive");
    };
    positive(width, "width");
    positive(height, "height");
    positive(mesh.h0, "mesh.h0");
    positive(mesh.min_h, "mesh.min_h");
    positive(model.eps, "model.eps");
    positive(model.mu, "model.mu");
    positive(model.gamma, "model.gamma");
    positive(stepping.xi, "stepping.xi");
    positive(stepping.tau_max, "stepping.tau_max");
    if (model.alpha_bar < 0) fail("field 'model.alpha_bar' must be nonnegative");
    if (!(model.s > 1)) fail("field 'model.s' must exceed 1");
    if (!(model.theta > -1 && model.theta < 1)) fail("field 'model.theta' must lie in (-1,1)");
    if (model.delta_eps < 0) fail("field 'model.delta_eps' must be nonnegative");
    if (!(mesh.dorfler > 0 && mesh.dorfler <= 1)) fail("field 'mesh.dorfler' must lie in (0,1]");
    if (model.modulation != "half" && model.modulation != "sqrt_psi")
        fail("field 'model.modulation' must be 'half' or 'sqrt_psi'");
    if (functional.type != "drag" && functional.type != "ratio")
        fail("field 'functional.type' must be 'drag' or 'ratio'");
    if (functional.jphi_form != "rewritten" && functional.jphi_form != "divform")
        fail("field 'functional.jphi_form' must be 'rewritten' or 'divform'");
    if (functional.surface_sampling != "containing" && functional.surface_sampling != "averaged")
        fail("field 'functional.surface_sampling' must be 'containing' or 'averaged'");
    if (obstacle.shape != "circle" && obstacle.shape != "from_file")
        fail("field 'obstacle.shape' must be 'circle' or 'from_file'");
    for (const auto* sched : {&schedules.mu, &schedules.gamma}) {
        for (const auto& s : *sched) {
            if (!(s.value > 0)) fail("schedule values must be positive");
            if (s.steps < 0) fail("schedule steps must be nonnegative");
        }
    }
    if (!schedules.mu.empty() && schedules.mu.back().value != model.mu)
        fail("mu schedule must end at model.mu");
    if (!schedules.gamma.empty() && schedules.gamma.back().value != model.gamma)
        fail("gamma schedule must end at model.gamma");
}

namespace {

std::vector<ScheduleStage> geometric_stages(double start, double target, int stage_steps) {
    // three stages with equal ratios, the last one holding the target
    std::vector<ScheduleStage> out;
    if (start <= 0 || start == target) {
        out.push_back({target, 0});
        return out;
    }
    double mid = std::sqrt(start * target);
    out.push_back({start, stage_steps});
    out.push_back({mid, stage_steps});
    out.push_back({target, 0});  // 0 = run to the end
    return out;
}

}  // namespace

std::vector<ScheduleStage> RunConfig::resolved_mu_schedule() const {
    if (!schedules.mu.empty()) return schedules.mu;
    return geometric_stages(schedules.mu_start, model.mu, schedules.stage_steps);
}

std::vector<ScheduleStage> RunConfig::resolved_gamma_schedule() const {
    if (!schedules.gamma.empty()) return schedules.gamma;
    return geometric_stages(schedules.gamma_start, model.gamma, schedules.stage_steps);
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
    json j;
    // tolerate an empty document: all defaults
    bool blank = text.find_first_not_of(" \t\r\n") == std::string::npos;
    if (blank) {
        j = json::object();
    } else {
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            auto [line, col] = line_col(text, e.byte);
            fail(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                 e.what());
        }
    }
    apply_env_overrides(j);

    check_keys(j, "", {"width", "height", "obstacle", "mesh", "model", "flow", "functional",
                       "schedules", "stepping", "constraints", "output", "seed"});

    RunConfig c;
    get_to(j, "width", c.width);
    get_to(j, "height", c.height);
    get_to(j, "seed", c.seed);
    if (j.contains("obstacle")) {
        const auto& o = j["obstacle"];
        check_keys(o, "obstacle", {"shape", "center", "radius", "file"});
        get_to(o, "shape", c.obstacle.shape);
        get_vec2(o, "center", c.obstacle.center);
        get_to(o, "radius", c.obstacle.radius);
        get_to(o, "file", c.obstacle.file);
    }
    if (j.contains("mesh")) {
        const auto& o = j["mesh"];
        check_keys(o, "mesh", {"h0", "adapt_every", "dorfler", "min_h", "max_triangles",
                               "max_rounds"});
        get_to(o, "h0", c.mesh.h0);
        get_to(o, "adapt_every", c.mesh.adapt_every);
        get_to(o, "dorfler", c.mesh.dorfler);
        get_to(o, "min_h", c.mesh.min_h);
        get_to(o, "max_triangles", c.mesh.max_triangles);
        get_to(o, "max_rounds", c.mesh.max_rounds);
    }
    if (j.contains("model")) {
        const auto& o = j["model"];
        check_keys(o, "model", {"eps", "alpha_bar", "mu", "gamma", "s", "theta", "delta_eps",
                                "modulation", "fold_c0"});
        get_to(o, "eps", c.model.eps);
        get_to(o, "alpha_bar", c.model.alpha_bar);
        get_to(o, "mu", c.model.mu);
        get_to(o, "gamma", c.model.gamma);
        get_to(o, "s", c.model.s);
        get_to(o, "theta", c.model.theta);
        get_to(o, "delta_eps", c.model.delta_eps);
        get_to(o, "modulation", c.model.modulation);
        get_to(o, "fold_c0", c.model.fold_c0);
    }
    if (j.contains("flow")) {
        const auto& o = j["flow"];
        check_keys(o, "flow", {"g", "f", "dirichlet_outflow"});
        get_vec2(o, "g", c.flow.g);
        get_vec2(o, "f", c.flow.f);
        get_to(o, "dirichlet_outflow", c.flow.dirichlet_outflow);
    }
    if (j.contains("functional")) {
        const auto& o = j["functional"];
        check_keys(o, "functional",
                   {"type", "drag_dir", "lift_dir", "jphi_form", "surface_sampling"});
        get_to(o, "type", c.functional.type);
        get_vec2(o, "drag_dir", c.functional.drag_dir);
        get_vec2(o, "lift_dir", c.functional.lift_dir);
        get_to(o, "jphi_form", c.functional.jphi_form);
        get_to(o, "surface_sampling", c.functional.surface_sampling);
    }
    if (j.contains("schedules")) {
        const auto& o = j["schedules"];
        check_keys(o, "schedules", {"mu", "gamma", "mu_start", "gamma_start", "stage_steps"});
        if (o.contains("mu")) c.schedules.mu = parse_stages(o["mu"], "schedules.mu");
        if (o.contains("gamma")) c.schedules.gamma = parse_stages(o["gamma"], "schedules.gamma");
        get_to(o, "mu_start", c.schedules.mu_start);
        get_to(o, "gamma_start", c.schedules.gamma_start);
        get_to(o, "stage_steps", c.schedules.stage_steps);
    }
    if (j.contains("stepping")) {
        const auto& o = j["stepping"];
        check_keys(o, "stepping", {"xi", "tau_max", "max_steps", "stagnation_tol"});
        get_to(o, "xi", c.stepping.xi);
        get_to(o, "tau_max", c.stepping.tau_max);
        get_to(o, "max_steps", c.stepping.max_steps);
        get_to(o, "stagnation_tol", c.stepping.stagnation_tol);
    }
    if (j.contains("constraints")) {
        const auto& o = j["constraints"];
        check_keys(o, "constraints", {"com_y"});
        get_to(o, "com_y", c.constraints.com_y);
    }
    if (j.contains("output")) {
        const auto& o = j["output"];
        check_keys(o, "output", {"dir", "vtk_every"});
        get_to(o, "dir", c.output.dir);
        get_to(o, "vtk_every", c.output.vtk_every);
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

std::string save_config(const RunConfig& c) {
    json j;
    j["width"] = c.width;
    j["height"] = c.height;
    j["seed"] = c.seed;
    j["obstacle"] = {{"shape", c.obstacle.shape},
                     {"center", vec2(c.obstacle.center)},
                     {"radius", c.obstacle.radius},
                     {"file", c.obstacle.file}};
    j["mesh"] = {{"h0", c.mesh.h0},
                 {"adapt_every", c.mesh.adapt_every},
                 {"dorfler", c.mesh.dorfler},
                 {"min_h", c.mesh.min_h},
                 {"max_triangles", c.mesh.max_triangles},
                 {"max_rounds", c.mesh.max_rounds}};
    j["model"] = {{"eps", c.model.eps},
                  {"alpha_bar", c.model.alpha_bar},
                  {"mu", c.model.mu},
                  {"gamma", c.model.gamma},
                  {"s", c.model.s},
                  {"theta", c.model.theta},
                  {"delta_eps", c.model.delta_eps},
                  {"modulation", c.model.modulation},
                  {"fold_c0", c.model.fold_c0}};
    j["flow"] = {{"g", vec2(c.flow.g)},
                 {"f", vec2(c.flow.f)},
                 {"dirichlet_outflow", c.flow.dirichlet_outflow}};
    j["functional"] = {{"type", c.functional.type},
                       {"drag_dir", vec2(c.functional.drag_dir)},
                       {"lift_dir", vec2(c.functional.lift_dir)},
                       {"jphi_form", c.functional.jphi_form},
                       {"surface_sampling", c.functional.surface_sampling}};
    j["schedules"] = {{"mu", dump_stages(c.schedules.mu)},
                      {"gamma", dump_stages(c.schedules.gamma)},
                      {"mu_start", c.schedules.mu_start},
                      {"gamma_start", c.schedules.gamma_start},
                      {"stage_steps", c.schedules.stage_steps}};
    j["stepping"] = {{"xi", c.stepping.xi},
                     {"tau_max", c.stepping.tau_max},
                     {"max_steps", c.stepping.max_steps},
                     {"stagnation_tol", c.stepping.stagnation_tol}};
    j["constraints"] = {{"com_y", c.constraints.com_y}};
    j["output"] = {{"dir", c.output.dir}, {"vtk_every", c.output.vtk_every}};
    return j.dump(2) + "\n";
}

}  // namespace pfopt
