#include "pfopt/material.hpp"

#include <cmath>
#include <stdexcept>

namespace pfopt {

PsiValues psi_family(double y, const PotentialParams& p) {
    const double s = p.s;
    if (!(s > 1)) throw std::invalid_argument("psi_family: s must exceed 1");
    const double r = s / (s - 1.0);
    const double t = r * y;
    const double up = std::max(0.0, t - 1.0);
    const double dn = std::min(0.0, t + 1.0);

    PsiValues v;
    v.psi_plus = 0.5 * s * (up * up + dn * dn);
    v.psi_minus = 0.5 * (1.0 - t * t) + 0.5 / (s - 1.0);
    v.psi = v.psi_plus + v.psi_minus;
    v.dpsi_plus = r * s * (up + dn);
    v.dpsi_minus = -r * r * y;
    return v;
}

AlphaValues alpha_family(double y, const InterpolationParams& p) {
    const double scale = p.alpha_bar / p.eps;
    const double th = p.theta;
    AlphaValues v{0.0, 0.0};
    if (y >= 1.0) return v;
    if (y >= th) {
        const double c = 1.0 / ((1.0 - th) * (3.0 + th));
        v.value = scale * c * (y - 1.0) * (y - 1.0);
        v.deriv = scale * 2.0 * c * (y - 1.0);
        return v;
    }
    const double cap = 1.0 + 2.0 / (3.0 + th);
    const double lin = 1.0 - 2.0 / (3.0 + th) * (y + 1.0);
    if (lin >= cap) {  // y <= -2: saturated plateau, one-sided derivative 0
        v.value = scale * cap;
        v.deriv = 0.0;
    } else {
        v.value = scale * lin;
        v.deriv = -scale * 2.0 / (3.0 + th);
    }
    return v;
}

namespace {

// Adaptive Simpson with absolute tolerance.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1);
}

double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double tol) {
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

}  // namespace

double c0_of_potential(const std::function<double(double)>& psi) {
    auto integrand = [&](double y) { return std::sqrt(std::max(0.0, 2.0 * psi(y))); };
    return 0.5 * integrate_adaptive(integrand, -1.0, 1.0, 1e-9);
}

double c0_value(const PotentialParams& p) {
    return c0_of_potential([&](double y) { return psi_family(y, p).psi; });
}

ModulationValues modulation(double y, const ModulationChoice& choice, const PotentialParams& pot,
                            double c0) {
    if (choice.variant == ModulationVariant::Half) return {0.5, 0.0};
    PsiValues pv = psi_family(y, pot);
    double shifted = pv.psi + choice.delta_eps;
    ModulationValues m;
    m.value = std::sqrt(std::max(0.0, shifted) / 2.0) / c0;
    m.deriv = pv.dpsi() / (2.0 * std::sqrt(2.0 * (std::max(0.0, shifted) + choice.delta_floor))) / c0;
    return m;
}

Material Material::make(PotentialParams pot, InterpolationParams interp, ModulationChoice mod) {
    Material m;
    m.potential = pot;
    m.interpolation = interp;
    m.modulation_choice = mod;
    m.c0 = c0_value(pot);
    return m;
}

ModulationValues Material::modulation(double y) const {
    return pfopt::modulation(y, modulation_choice, potential, c0);
}

double Material::d2psi_plus(double y) const {
    const double s = potential.s;
    const double r = s / (s - 1.0);
    const double t = r * y;
    return (t > 1.0 || t < -1.0) ? r * r * s : 0.0;
}

double Material::d2alpha(double y) const {
    const double th = interpolation.theta;
    if (y >= th && y < 1.0)
        return (interpolation.alpha_bar / interpolation.eps) * 2.0 / ((1.0 - th) * (3.0 + th));
    return 0.0;
}

}  // namespace pfopt
