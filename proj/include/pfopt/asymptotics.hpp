#pragma once

#include "pfopt/material.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace pfopt {

/// Scalar double-well potential handle for the 1D interface lab.
struct Potential1D {
    std::function<double(double)> psi;
    bool obstacle_type = false;  // profile saturates at finite z = pi/2
    std::string name;
};

Potential1D pure_obstacle_potential();            // (1 - y^2)/2
Potential1D quartic_well_potential();             // (1 - y^2)^2/4
Potential1D relaxed_obstacle_potential(double s); // Moreau-Yosida relaxed well

/// Monotone transition profile on a symmetric z grid: Phi(0) = 0, Phi -> +-1.
struct ProfileSolution {
    Eigen::VectorXd z;
    Eigen::VectorXd phi;
    Eigen::VectorXd dphi;
};

/// Integrates dz = dPhi / sqrt(2 psi) (the first integral of the profile ODE)
/// and inverts it onto a uniform grid of n_points over [-z_max, z_max].
ProfileSolution profile_ode_solve(const Potential1D& pot, double z_max, int n_points);

/// max_z | (Phi')^2 / 2 - psi(Phi) |
double equipartition_residual(const ProfileSolution& profile, const Potential1D& pot);

struct C0Identities {
    double c0_def;      // (1/2) int sqrt(2 psi) over [-1,1]
    double c0_profile;  // (1/2) int (Phi')^2 dz
};

C0Identities c0_identities(const Potential1D& pot);

/// int M0(Phi) Phi' dz, which certifies the limit Dirichlet datum when it is 1.
double q0_plus_check(const Potential1D& pot, ModulationVariant variant);

}  // namespace pfopt
