#pragma once

#include "pfopt/fem.hpp"
#include "pfopt/material.hpp"

#include <functional>

namespace pfopt {

using BodyForce = std::function<Eigen::Vector2d(const Eigen::Vector2d&)>;

inline BodyForce zero_force() {
    return [](const Eigen::Vector2d&) { return Eigen::Vector2d::Zero(); };
}

/// Dirichlet velocity data. By default g is imposed on the whole boundary
/// (which requires zero net flux); with dirichlet_everywhere = false the
/// right edge is left free (do-nothing outflow).
struct InflowProfile {
    std::function<Eigen::Vector2d(const Eigen::Vector2d&)> g =
        [](const Eigen::Vector2d&) { return Eigen::Vector2d(1.0, 0.0); };
    bool dirichlet_everywhere = true;

    double net_flux(const TriMesh& mesh) const;
    void validate(const TriMesh& mesh) const;
};

struct NewtonSettings {
    double tol = 1e-10;
    int max_iter = 25;
    int max_halvings = 8;
    bool picard = false;  // drop the (du . grad) u linearization block
    std::vector<double>* residual_history = nullptr;  // per-iteration norms
};

struct StateFields {
    Eigen::VectorXd u;  // P2 vector, interleaved
    Eigen::VectorXd p;  // P1, zero mean when the mean constraint is active
};

struct NewtonError : std::runtime_error {
    double residual;
    Eigen::VectorXd last_u, last_p;
    NewtonError(const std::string& what, double res, Eigen::VectorXd u, Eigen::VectorXd p)
        : std::runtime_error(what), residual(res), last_u(std::move(u)), last_p(std::move(p)) {}
};

/// Newton solve of the porous-medium-relaxed stationary Navier-Stokes system
/// with alpha evaluated at the given (frozen) phi.
StateFields solve_state(const THSpace& space, const Eigen::VectorXd& phi, const Material& mat,
                        double mu, const BodyForce& f, const InflowProfile& g,
                        const NewtonSettings& settings = {}, const StateFields* init = nullptr);

/// solve_state with viscosity continuation fallback: on failure, restart from a
/// larger mu and walk down geometrically (factor 1/2), warm-starting each stage.
StateFields solve_state_robust(const THSpace& space, const Eigen::VectorXd& phi,
                               const Material& mat, double mu, const BodyForce& f,
                               const InflowProfile& g, const NewtonSettings& settings = {},
                               const StateFields* init = nullptr);

/// Euclidean norm of the assembled residual on the free dofs.
double state_residual(const THSpace& space, const StateFields& state, const Eigen::VectorXd& phi,
                      const Material& mat, double mu, const BodyForce& f, const InflowProfile& g);

/// mu / K_Omega - ||grad u||_{L2}; positive certifies the uniqueness regime.
double uniqueness_margin(const THSpace& space, const StateFields& state, double mu);

/// Raw (unconstrained) Jacobian of the discrete system at state (u, p):
/// blocks [[K, -B^T, 0], [B, 0, m], [0, m^T, 0]] in the ordering u | p | rho.
/// The adjoint solve transposes exactly this operator.
Eigen::SparseMatrix<double, Eigen::RowMajor> state_jacobian_raw(
    const THSpace& space, const Eigen::VectorXd& phi, const Material& mat, double mu,
    const Eigen::VectorXd& u, bool with_mean_row);

/// Dirichlet mask for the velocity dofs under the given profile.
std::vector<char> dirichlet_u_mask(const THSpace& space, const InflowProfile& g);

}  // namespace pfopt
