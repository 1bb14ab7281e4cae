#pragma once

#include <functional>

namespace pfopt {

/// Relaxed double-obstacle free energy with penalization parameter s >> 1.
struct PotentialParams {
    double s = 1e6;
};

/// Brinkman interpolation: linear between y = -2 and y = theta with a
/// quadratic extension on [theta, 1]; zero for y >= 1, saturated for y <= -2.
struct InterpolationParams {
    double alpha_bar = 1.0;
    double eps = 1e-3;
    double theta = 0.99;
};

enum class ModulationVariant { Half, SqrtPsi };

struct ModulationChoice {
    ModulationVariant variant = ModulationVariant::SqrtPsi;
    double delta_eps = 0.0;     // shift under the square root
    double delta_floor = 1e-12; // derivative denominator safeguard
};

struct PsiValues {
    double psi, psi_plus, psi_minus, dpsi_plus, dpsi_minus;
    double dpsi() const { return dpsi_plus + dpsi_minus; }
};

struct AlphaValues {
    double value, deriv;
};

struct ModulationValues {
    double value, deriv;
};

/// psi = psi_plus + psi_minus with psi_plus convex, psi_minus concave;
/// minima psi(+-1) = 0.
PsiValues psi_family(double y, const PotentialParams& p);

AlphaValues alpha_family(double y, const InterpolationParams& p);

/// c0 = (1/2) integral over [-1,1] of sqrt(2 psi); adaptive quadrature to 1e-8.
double c0_value(const PotentialParams& p);
double c0_of_potential(const std::function<double(double)>& psi);

/// All constitutive pieces bundled with the cached c0.
struct Material {
    PotentialParams potential;
    InterpolationParams interpolation;
    ModulationChoice modulation_choice;
    double c0 = 0.0;

    static Material make(PotentialParams pot, InterpolationParams interp, ModulationChoice mod);

    PsiValues psi(double y) const { return psi_family(y, potential); }
    AlphaValues alpha(double y) const { return alpha_family(y, interpolation); }
    ModulationValues modulation(double y) const;

    /// Second derivatives of the pieces that the phase-step Newton linearizes.
    double d2psi_plus(double y) const;
    double d2alpha(double y) const;

    /// Ginzburg-Landau prefactor: gamma already carries the 1/(2 c0) when folded.
    double gl_scale(double gamma, bool fold_c0) const { return fold_c0 ? gamma : gamma / (2.0 * c0); }
};

ModulationValues modulation(double y, const ModulationChoice& choice, const PotentialParams& pot,
                            double c0);

}  // namespace pfopt
