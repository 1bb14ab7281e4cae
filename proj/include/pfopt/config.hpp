#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace pfopt {

struct ObstacleConfig {
    std::string shape = "circle";  // circle | from_file
    Eigen::Vector2d center{0.5, 0.2};
    double radius = 0.05;
    std::string file;  // nodal phi values, one per mesh vertex
};

struct MeshConfig {
    double h0 = 0.05;
    int adapt_every = 10;   // re-mesh + re-refine cadence (0 disables)
    double dorfler = 0.5;
    double min_h = 2.5e-3;  // refinement floor
    int max_triangles = 60000;
    int max_rounds = 40;    // refinement passes per adaptation
};

struct ModelConfig {
    double eps = 2.5e-4;
    double alpha_bar = 0.03;
    double mu = 0.001;
    double gamma = 0.01;
    double s = 1e6;
    double theta = 0.99;
    double delta_eps = 0.0;
    std::string modulation = "sqrt_psi";  // half | sqrt_psi
    bool fold_c0 = true;
};

struct FlowConfig {
    Eigen::Vector2d g{1.0, 0.0};
    Eigen::Vector2d f{0.0, 0.0};
    bool dirichlet_outflow = true;
};

struct FunctionalConfig {
    std::string type = "drag";  // drag | ratio
    Eigen::Vector2d drag_dir{1.0, 0.0};
    Eigen::Vector2d lift_dir{0.0, 1.0};
    std::string jphi_form = "rewritten";  // rewritten | divform
    std::string surface_sampling = "containing";  // containing | averaged
};

struct ScheduleStage {
    double value = 0.0;
    int steps = 0;
};

struct ScheduleConfig {
    std::vector<ScheduleStage> mu;
    std::vector<ScheduleStage> gamma;
    double mu_start = 0.0;     // 0 = no path following
    double gamma_start = 0.0;
    int stage_steps = 15;
};

struct SteppingConfig {
    double xi = 5.0;
    double tau_max = 1.0;
    int max_steps = 200;
    double stagnation_tol = 1e-7;
};

struct ConstraintConfig {
    bool com_y = false;
};

struct OutputConfig {
    std::string dir = "out";
    int vtk_every = 25;
};

struct RunConfig {
    double width = 1.7;
    double height = 0.4;
    ObstacleConfig obstacle;
    MeshConfig mesh;
    ModelConfig model;
    FlowConfig flow;
    FunctionalConfig functional;
    ScheduleConfig schedules;
    SteppingConfig stepping;
    ConstraintConfig constraints;
    OutputConfig output;
    unsigned seed = 1;

    void validate() const;

    /// Resolved schedules: per-step (mu, gamma) values; built from the stage
    /// lists, or from the geometric default when only start values are given.
    std::vector<ScheduleStage> resolved_mu_schedule() const;
    std::vector<ScheduleStage> resolved_gamma_schedule() const;
};

/// Parse (JSON document; empty file = all defaults), validate, apply
/// PFOPT_* environment overrides. Unknown keys are rejected.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text, const std::string& origin = "<string>");
std::string save_config(const RunConfig& config);

}  // namespace pfopt
