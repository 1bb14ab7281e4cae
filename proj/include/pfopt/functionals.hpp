#pragma once

#include "pfopt/fem.hpp"
#include "pfopt/flow_state.hpp"
#include "pfopt/material.hpp"

namespace pfopt {

enum class FunctionalKind { Drag, Ratio, GinzburgLandauOnly };

struct ForceFunctional {
    FunctionalKind kind = FunctionalKind::Drag;
    Eigen::Vector2d drag_dir{1.0, 0.0};
    Eigen::Vector2d lift_dir{0.0, 1.0};
};

/// Volume form of the hydrodynamic force in direction a:
/// int M(phi) grad(phi) . (mu (grad u + grad u^T) - p I) a.
double eval_force_volume(const THSpace& space, const Eigen::VectorXd& phi,
                         const StateFields& state, const Eigen::Vector2d& a, const Material& mat,
                         double mu);

struct IsolineSegment {
    Eigen::Vector2d p0, p1;
    Eigen::Vector2d normal;  // grad(phi)/|grad(phi)|, points into the fluid
    int triangle;
};

struct IsolineSet {
    std::vector<IsolineSegment> segments;
    int degenerate_skipped = 0;
    double total_length() const;
};

/// Marching-triangles crossings of phi = 0 (vertices with phi <= 0 count as solid).
IsolineSet extract_isoline(const TriMesh& mesh, const Eigen::VectorXd& phi);

enum class StressSampling { Containing, NodalAveraged };

/// Surface form: sum over segments of |seg| * a . (sigma nu) at the midpoint,
/// sigma sampled from the containing element (or a nodal-averaged recovery).
double eval_force_surface(const THSpace& space, const Eigen::VectorXd& phi,
                          const StateFields& state, const Eigen::Vector2d& a, double mu,
                          StressSampling sampling = StressSampling::Containing);

struct ObjectiveValue {
    double porous = 0;    // int alpha |u|^2 / 2
    double gl_grad = 0;   // gl_scale * eps/2 |grad phi|^2
    double gl_pot = 0;    // gl_scale * psi(phi)/eps
    double force = 0;     // force term (or -lift/drag in ratio mode)
    double total() const { return porous + gl_grad + gl_pot + force; }
};

ObjectiveValue eval_objective(const THSpace& space, const Eigen::VectorXd& phi,
                              const StateFields& state, const ForceFunctional& functional,
                              const Material& mat, double mu, double eps, double gamma,
                              bool fold_c0);

/// F^L / F^D with both forces in volume form.
double eval_ratio(const THSpace& space, const Eigen::VectorXd& phi, const StateFields& state,
                  const Material& mat, double mu, const ForceFunctional& functional = {});

}  // namespace pfopt
