#pragma once

#include "pfopt/fem.hpp"
#include "pfopt/flow_state.hpp"
#include "pfopt/functionals.hpp"
#include "pfopt/material.hpp"

namespace pfopt {

/// Pointwise linearization data of the force term, stored per quadrature point
/// (degree-4 rule ordering). For the lift-to-drag ratio the quotient rule
/// reduces to the force linearization in the combined direction
///   a_eff = (-1/F^D) a_lift + (F^L/(F^D)^2) a_drag,
/// since every derivative is linear in the force direction.
struct FunctionalLinearization {
    Eigen::Vector2d a_eff;
    int n_qp = 0;  // quadrature points per triangle
    std::vector<Eigen::Matrix2d> d2h;  // mu (grad phi x a + a x grad phi)
    std::vector<double> d3h;           // -a . grad phi
    std::vector<Eigen::Vector2d> d4h;  // (mu (grad u + grad u^T) - p I) a
    std::vector<double> h;             // grad phi . d4h
    double vartheta = 0.0;
    double force_drag = 0.0, force_lift = 0.0;  // current volume-form values

    int index(int tri, int q) const { return tri * n_qp + q; }
};

FunctionalLinearization linearize_functional(const THSpace& space,
                                             const ForceFunctional& functional,
                                             const StateFields& state,
                                             const Eigen::VectorXd& phi, const Material& mat,
                                             double mu);

/// Mean of M(phi) D3h over the domain.
double compute_vartheta(const THSpace& space, const FunctionalLinearization& lin,
                        const Eigen::VectorXd& phi, const Material& mat);

struct AdjointFields {
    Eigen::VectorXd q;   // P2 vector, zero on the Dirichlet part of the boundary
    Eigen::VectorXd pi;  // P1 adjoint pressure
    double vartheta = 0.0;  // divergence-datum multiplier recovered from the solve
};

/// Solves the adjoint saddle system as the exact transpose of the discrete
/// linearized state operator. The transposed pressure-mean constraint row
/// produces the divergence-datum mean shift as a multiplier, which must agree
/// with compute_vartheta.
AdjointFields solve_adjoint(const THSpace& space, const Eigen::VectorXd& phi,
                            const StateFields& state, const FunctionalLinearization& lin,
                            const Material& mat, double mu, const InflowProfile& g);

/// Directional derivative of the control-to-state map: (du, dp) solving the
/// linearized state system for direction zeta (test use and oracles).
StateFields solve_linearized_state(const THSpace& space, const Eigen::VectorXd& phi,
                                   const StateFields& state, const Material& mat, double mu,
                                   const InflowProfile& g, const Eigen::VectorXd& zeta);

}  // namespace pfopt
