#pragma once

#include "pfopt/config.hpp"
#include "pfopt/fem.hpp"
#include "pfopt/flow_adjoint.hpp"
#include "pfopt/flow_state.hpp"
#include "pfopt/functionals.hpp"
#include "pfopt/material.hpp"
#include "pfopt/mesh.hpp"

#include <memory>
#include <optional>

namespace pfopt {

/// tau = xi * min_T h_T / ||grad w||_{L2(T)}, triangles with negligible
/// gradient excluded; tau_max when no triangle qualifies.
double adaptive_tau(const TriMesh& mesh, const Eigen::VectorXd& w, double xi, double tau_max);

enum class JphiForm {
    Rewritten,  // M(phi)(f - alpha u - (u.grad)u) . a tested against zeta
    DivForm,    // M' h(grad phi^{k+1}) zeta + M D4h . grad zeta
};

/// Weak-form load of the functional derivative for the phase equation.
/// `coupling` (DivForm only) multiplies phi^{k+1}; the explicit part is `load`.
struct JphiLoad {
    Eigen::VectorXd load;
    Eigen::SparseMatrix<double, Eigen::RowMajor> coupling;  // empty when absent
    bool has_coupling = false;

    Eigen::VectorXd total(const Eigen::VectorXd& phi_new) const {
        return has_coupling ? Eigen::VectorXd(load + coupling * phi_new) : load;
    }
};

JphiLoad assemble_Jphi(const THSpace& space, JphiForm form, const Eigen::VectorXd& phi_k,
                       const StateFields& state, const Material& mat,
                       const FunctionalLinearization& lin, const BodyForce& f);

/// Nodal vector of the reduced objective gradient: pairing with a zero-mean
/// direction gives the directional derivative of the discrete reduced
/// objective (used by the finite-difference oracle).
Eigen::VectorXd assemble_reduced_gradient(const THSpace& space, const Eigen::VectorXd& phi,
                                          const StateFields& state, const AdjointFields& adjoint,
                                          const FunctionalLinearization& lin, const Material& mat,
                                          double eps, double gamma, bool fold_c0);

struct ChStepSettings {
    double tol = 1e-11;
    int max_iter = 50;
    bool com_constraint = false;
};

struct ChStepResult {
    Eigen::VectorXd phi;
    Eigen::VectorXd w;
    int newton_iters = 0;
    double com_multiplier = 0.0;
};

/// One semi-implicit Cahn-Hilliard step (convex part of psi and the
/// alpha'(.)|u|^2/2 term implicit, concave part and couplings explicit),
/// solved by a semismooth Newton iteration on the monolithic (phi, w) system.
/// state/adjoint may be null for the pure Ginzburg-Landau flow.
ChStepResult ch_step(const THSpace& space, const Eigen::VectorXd& phi_k,
                     const StateFields* state, const AdjointFields* adjoint,
                     const JphiLoad& jphi, const Material& mat, double eps, double gamma,
                     bool fold_c0, double tau, const ChStepSettings& settings = {});

/// y-coordinate of the obstacle's center of mass, int (1-phi)/2 y / int (1-phi)/2.
double com_y(const TriMesh& mesh, const Eigen::VectorXd& phi);

/// Projects a w-equation load so the induced H^-1 flow direction leaves the
/// linearized center-of-mass y-coordinate unchanged.
Eigen::VectorXd apply_com_constraint(const Eigen::VectorXd& load, const THSpace& space,
                                     const Eigen::VectorXd& phi);

struct GradientCheckReport {
    unsigned seed = 0;
    std::vector<double> deltas;
    double analytic = 0.0;
    std::vector<double> fd_values;
    std::vector<double> rel_errors;
    double uniqueness_margin = 0.0;
    double min_rel_error() const;
};

/// Compares the adjoint-based directional derivative against centered finite
/// differences of the re-solved reduced objective.
GradientCheckReport fd_gradient_check(const RunConfig& config, const Eigen::VectorXd* direction,
                                      const std::vector<double>& deltas);

struct LogRow {
    int step = 0;
    double tau = 0, mu = 0, gamma = 0;
    double j_total = 0, j_porous = 0, j_gl = 0, j_force = 0;
    double fd_vol = 0, fd_surf = 0, fl_vol = 0, ratio = 0;
    double mass_err = 0;  // |int phi - target| / |Omega|
    double com = 0;
    double step_mass_delta = 0;  // |int phi^{k+1} - int phi^k| / |Omega|
    int newton_iters_state = 0, newton_iters_ch = 0;
};

struct Snapshot {
    int step;
    TriMesh mesh;
    Eigen::VectorXd phi, w, p, pi;
    Eigen::VectorXd u, q;  // P2 nodal (interleaved)
};

struct Trajectory {
    std::vector<LogRow> rows;
    std::vector<Snapshot> snapshots;
    TriMesh final_mesh;
    Eigen::VectorXd final_phi, final_w;
    StateFields final_state;
    AdjointFields final_adjoint;
    std::string stop_reason;
};

/// Builds the initial phase field for the configured obstacle on a mesh.
Eigen::VectorXd initial_phase_field(const TriMesh& mesh, const RunConfig& config);

/// Full gradient-flow loop: state -> adjoint -> phase step, with adaptive
/// time steps, path-following schedules, cadence-based mesh adaptation and
/// optional center-of-mass constraint.
Trajectory run_optimization(const RunConfig& config);

}  // namespace pfopt
