#include "pfopt/asymptotics.hpp"
#include "pfopt/config.hpp"
#include "pfopt/io.hpp"
#include "pfopt/optimizer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

using namespace pfopt;

int cmd_run(const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    Trajectory traj = run_optimization(cfg);
    write_outputs(traj, cfg);
    const LogRow& first = traj.rows.front();
    const LogRow& last = traj.rows.back();
    std::printf("steps=%d stop=%s\n", last.step, traj.stop_reason.c_str());
    std::printf("F^D: %.5g -> %.5g\n", first.fd_vol, last.fd_vol);
    if (cfg.functional.type == "ratio")
        std::printf("R:   %.5g -> %.5g\n", first.ratio, last.ratio);
    std::printf("outputs in %s\n", cfg.output.dir.c_str());
    return 0;
}

int cmd_check_gradient(const std::string& config_path, double tol) {
    RunConfig cfg = load_config(config_path);
    GradientCheckReport rep = fd_gradient_check(cfg, nullptr, {1e-3, 1e-4, 1e-5, 1e-6});
    std::printf("uniqueness margin: %.6g%s\n", rep.uniqueness_margin,
                rep.uniqueness_margin > 0 ? "" : " (outside the certified regime)");
    std::printf("analytic directional derivative: %.12g\n", rep.analytic);
    for (size_t i = 0; i < rep.deltas.size(); ++i)
        std::printf("delta=%8.1e  fd=%.12g  rel_err=%.3e\n", rep.deltas[i], rep.fd_values[i],
                    rep.rel_errors[i]);
    double best = rep.min_rel_error();
    std::printf("min rel error: %.3e (tolerance %.1e)\n", best, tol);
    return best <= tol ? 0 : 1;
}

int cmd_asymptotics() {
    struct Case {
        Potential1D pot;
        double c0_exact;  // nan = none
    };
    std::vector<Case> cases;
    cases.push_back({pure_obstacle_potential(), M_PI / 4.0});
    cases.push_back({quartic_well_potential(), std::sqrt(2.0) / 3.0});
    cases.push_back({relaxed_obstacle_potential(1e6), std::numeric_limits<double>::quiet_NaN()});

    bool ok = true;
    for (const auto& c : cases) {
        C0Identities ids = c0_identities(c.pot);
        double zmax = c.pot.obstacle_type ? M_PI / 2.0 : 40.0;
        ProfileSolution prof = profile_ode_solve(c.pot, zmax, 4001);
        double equip = equipartition_residual(prof, c.pot);
        double q_half = q0_plus_check(c.pot, ModulationVariant::Half);
        double q_sqrt = q0_plus_check(c.pot, ModulationVariant::SqrtPsi);
        std::printf("potential=%s c0_def=%.6f c0_profile=%.6f equip_residual=%.3e "
                    "q0_half=%.6f q0_sqrt=%.6f\n",
                    c.pot.name.c_str(), ids.c0_def, ids.c0_profile, equip, q_half, q_sqrt);
        ok = ok && std::abs(ids.c0_def - ids.c0_profile) <= 1e-6 &&
             std::abs(q_half - 1.0) <= 1e-6 && std::abs(q_sqrt - 1.0) <= 1e-6;
        if (!std::isnan(c.c0_exact)) ok = ok && std::abs(ids.c0_def - c.c0_exact) <= 1e-6;
    }
    std::printf("%s\n", ok ? "all identities satisfied" : "IDENTITY VIOLATION");
    return ok ? 0 : 1;
}

int cmd_eval(const std::string& config_path, const std::string& phi_path) {
    RunConfig cfg = load_config(config_path);
    if (!phi_path.empty()) {
        cfg.obstacle.shape = "from_file";
        cfg.obstacle.file = phi_path;
    }
    TriMesh mesh = generate_rect_mesh(cfg.width, cfg.height, cfg.mesh.h0);
    Eigen::VectorXd phi = initial_phase_field(mesh, cfg);
    THSpace space(mesh);

    PotentialParams pot{cfg.model.s};
    InterpolationParams interp{cfg.model.alpha_bar, cfg.model.eps, cfg.model.theta};
    ModulationChoice mod;
    mod.variant = cfg.model.modulation == "half" ? ModulationVariant::Half
                                                 : ModulationVariant::SqrtPsi;
    mod.delta_eps = cfg.model.delta_eps;
    Material mat = Material::make(pot, interp, mod);

    InflowProfile g;
    Eigen::Vector2d gval = cfg.flow.g;
    g.g = [gval](const Eigen::Vector2d&) { return gval; };
    g.dirichlet_everywhere = cfg.flow.dirichlet_outflow;
    Eigen::Vector2d fval = cfg.flow.f;
    BodyForce f = [fval](const Eigen::Vector2d&) { return fval; };

    StateFields state = solve_state_robust(space, phi, mat, cfg.model.mu, f, g);
    ForceFunctional fn;
    fn.kind = cfg.functional.type == "ratio" ? FunctionalKind::Ratio : FunctionalKind::Drag;
    ObjectiveValue obj = eval_objective(space, phi, state, fn, mat, cfg.model.mu, cfg.model.eps,
                                        cfg.model.gamma, cfg.model.fold_c0);
    double fd = eval_force_volume(space, phi, state, fn.drag_dir, mat, cfg.model.mu);
    double fl = eval_force_volume(space, phi, state, fn.lift_dir, mat, cfg.model.mu);
    std::printf("J_total=%.6g J_porous=%.6g J_GL=%.6g J_force=%.6g\n", obj.total(), obj.porous,
                obj.gl_grad + obj.gl_pot, obj.force);
    std::printf("F^D_vol=%.6g F^L_vol=%.6g\n", fd, fl);
    try {
        double fds = eval_force_surface(space, phi, state, fn.drag_dir, cfg.model.mu);
        std::printf("F^D_surf=%.6g\n", fds);
    } catch (const std::runtime_error&) {
        std::printf("F^D_surf=n/a (no interface)\n");
    }
    std::printf("uniqueness_margin=%.6g\n", uniqueness_margin(space, state, cfg.model.mu));
    return 0;
}

int cmd_mesh_info(const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    TriMesh mesh = generate_rect_mesh(cfg.width, cfg.height, cfg.mesh.h0);
    double hmin = 1e300, hmax = 0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        hmin = std::min(hmin, mesh.diameter(t));
        hmax = std::max(hmax, mesh.diameter(t));
    }
    std::printf("vertices=%d triangles=%d boundary_edges=%zu\n", mesh.n_vertices(),
                mesh.n_triangles(), mesh.boundary_edges.size());
    std::printf("area=%.12g h_min=%.6g h_max=%.6g\n", mesh.total_area(), hmin, hmax);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"phase-field shape optimization for stationary Navier-Stokes flow"};
    app.require_subcommand(1);

    std::string config_path, phi_path;
    double grad_tol = 1e-3;

    auto* run = app.add_subcommand("run", "run the optimization loop");
    run->add_option("--config", config_path, "config file")->required();

    auto* grad = app.add_subcommand("check-gradient", "adjoint gradient vs finite differences");
    grad->add_option("--config", config_path, "config file")->required();
    grad->add_option("--tol", grad_tol, "acceptance tolerance on the relative error");

    app.add_subcommand("asymptotics", "1D interface identity certification");

    auto* ev = app.add_subcommand("eval", "one-shot state solve and functional evaluation");
    ev->add_option("--config", config_path, "config file")->required();
    ev->add_option("--phi", phi_path, "nodal phase-field file (overrides the obstacle)");

    auto* mi = app.add_subcommand("mesh-info", "generator mesh statistics");
    mi->add_option("--config", config_path, "config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand("run")) return cmd_run(config_path);
        if (app.got_subcommand("check-gradient")) return cmd_check_gradient(config_path, grad_tol);
        if (app.got_subcommand("asymptotics")) return cmd_asymptotics();
        if (app.got_subcommand("eval")) return cmd_eval(config_path, phi_path);
        if (app.got_subcommand("mesh-info")) return cmd_mesh_info(config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
