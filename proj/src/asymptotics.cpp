#include "pfopt/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace pfopt {

Potential1D pure_obstacle_potential() {
    return {[](double y) { return 0.5 * (1.0 - y * y); }, true, "obstacle"};
}

Potential1D quartic_well_potential() {
    return {[](double y) {
                double a = 1.0 - y * y;
                return 0.25 * a * a;
            },
            false, "quartic"};
}

Potential1D relaxed_obstacle_potential(double s) {
    PotentialParams p{s};
    return {[p](double y) { return psi_family(y, p).psi; }, true, "relaxed"};
}

namespace {

constexpr double kWellGap = 1e-15;  // stay this far from the wells

double gauss7(const std::function<double(double)>& f, double a, double b) {
    static const double xs[7] = {-0.9491079123427585, -0.7415311855993945, -0.4058451513773972,
                                 0.0, 0.4058451513773972, 0.7415311855993945, 0.9491079123427585};
    static const double ws[7] = {0.1294849661688697, 0.2797053914892766, 0.3818300505051189,
                                 0.4179591836734694, 0.3818300505051189, 0.2797053914892766,
                                 0.1294849661688697};
    double m = 0.5 * (a + b), h = 0.5 * (b - a);
    double acc = 0;
    for (int i = 0; i < 7; ++i) acc += ws[i] * f(m + h * xs[i]);
    return acc * h;
}

// Cumulative table for z(phi) = int_0^phi ds / sqrt(2 psi(s)).
//
// The central part is integrated in phi directly; the wings use the
// substitution phi = +-(1 - u^2), which regularizes the square-root
// behaviour of psi at the wells, with geometrically graded panels toward
// the (possibly logarithmically divergent) endpoints.
struct ProfileTable {
    const Potential1D* pot;
    std::vector<double> phi_pts;  // strictly increasing, phi_pts[0] = 0
    std::vector<double> z_pts;    // z(phi_pts[k])
    double phi_cap;               // largest tabulated phi
    double z_cap;

    double integrand_phi(double phi) const {
        return 1.0 / std::sqrt(std::max(1e-300, 2.0 * pot->psi(phi)));
    }
    // upper-wing integrand after phi = 1 - u^2
    double integrand_u(double u) const {
        return 2.0 * u / std::sqrt(std::max(1e-300, 2.0 * pot->psi(1.0 - u * u)));
    }

    double panel_integral(double pa, double pb) const {
        constexpr double split = 0.9;
        if (pb <= split)
            return gauss7([this](double p) { return integrand_phi(p); }, pa, pb);
        // integrate in u, descending in u means ascending in phi
        double ua = std::sqrt(1.0 - pa), ub = std::sqrt(1.0 - pb);
        return gauss7([this](double u) { return integrand_u(u); }, ub, ua);
    }

    explicit ProfileTable(const Potential1D& p) : pot(&p) {
        constexpr double split = 0.9;
        phi_pts.push_back(0.0);
        z_pts.push_back(0.0);
        const int n_main = 256;
        for (int i = 1; i <= n_main; ++i) {
            double phi = split * i / n_main;
            phi_pts.push_back(phi);
            z_pts.push_back(z_pts.back() + panel_integral(phi_pts[phi_pts.size() - 2], phi));
        }
        // wing: u from sqrt(1-split) down to sqrt(kWellGap), 8 panels per octave
        double u_hi = std::sqrt(1.0 - split);
        double u_lo = std::sqrt(kWellGap);
        const double ratio = std::pow(2.0, -1.0 / 8.0);
        double u = u_hi;
        while (u > u_lo) {
            double u_next = std::max(u_lo, u * ratio);
            double pa = 1.0 - u * u, pb = 1.0 - u_next * u_next;
            phi_pts.push_back(pb);
            z_pts.push_back(z_pts.back() + panel_integral(pa, pb));
            u = u_next;
        }
        phi_cap = phi_pts.back();
        z_cap = z_pts.back();
    }

    double z_of(double phi) const {
        if (phi <= 0.0) return 0.0;
        if (phi >= phi_cap) return z_cap;
        auto it = std::upper_bound(phi_pts.begin(), phi_pts.end(), phi);
        size_t k = static_cast<size_t>(it - phi_pts.begin()) - 1;
        return z_pts[k] + panel_integral(phi_pts[k], phi);
    }

    // inverse of z_of by bracketed bisection within the containing panel
    double phi_of(double z) const {
        if (z <= 0.0) return 0.0;
        if (z >= z_cap) return 1.0;
        auto it = std::upper_bound(z_pts.begin(), z_pts.end(), z);
        size_t k = static_cast<size_t>(it - z_pts.begin()) - 1;
        double lo = phi_pts[k], hi = phi_pts[std::min(k + 1, phi_pts.size() - 1)];
        double zlo = z_pts[k];
        for (int i = 0; i < 70; ++i) {
            double mid = 0.5 * (lo + hi);
            double zm = zlo + panel_integral(phi_pts[k], mid);
            if (zm < z)
                lo = mid;
            else
                hi = mid;
            if (hi - lo < 1e-16) break;
        }
        return 0.5 * (lo + hi);
    }
};

}  // namespace

ProfileSolution profile_ode_solve(const Potential1D& pot, double z_max, int n_points) {
    if (n_points < 3) throw std::invalid_argument("profile_ode_solve: need at least 3 points");
    for (int i = 0; i <= 400; ++i) {
        double y = -1.0 + 2.0 * i / 400.0;
        if (pot.psi(y) < -1e-14)
            throw std::invalid_argument("profile_ode_solve: potential negative on (-1,1)");
    }

    ProfileTable table(pot);

    ProfileSolution sol;
    sol.z.resize(n_points);
    sol.phi.resize(n_points);
    sol.dphi.resize(n_points);
    for (int i = 0; i < n_points; ++i) {
        double z = -z_max + 2.0 * z_max * i / (n_points - 1);
        sol.z[i] = z;
        double phi = table.phi_of(std::abs(z));
        if (z < 0) phi = -phi;
        sol.phi[i] = phi;
        sol.dphi[i] = std::sqrt(std::max(0.0, 2.0 * pot.psi(phi)));
    }
    return sol;
}

double equipartition_residual(const ProfileSolution& profile, const Potential1D& pot) {
    double worst = 0;
    for (int i = 0; i < profile.z.size(); ++i) {
        double r = 0.5 * profile.dphi[i] * profile.dphi[i] - pot.psi(profile.phi[i]);
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

namespace {

// composite Simpson over the stored uniform grid
double simpson(const ProfileSolution& p, const std::function<double(int)>& f) {
    double h = p.z[1] - p.z[0];
    double acc = 0;
    for (int i = 0; i + 2 < p.z.size(); i += 2) acc += h / 3.0 * (f(i) + 4.0 * f(i + 1) + f(i + 2));
    return acc;
}

}  // namespace

C0Identities c0_identities(const Potential1D& pot) {
    C0Identities out;
    out.c0_def = c0_of_potential(pot.psi);

    double z_max = pot.obstacle_type ? M_PI / 2.0 : 40.0;
    ProfileSolution p = profile_ode_solve(pot, z_max, 8001);
    out.c0_profile = 0.5 * simpson(p, [&](int i) { return p.dphi[i] * p.dphi[i]; });
    return out;
}

double q0_plus_check(const Potential1D& pot, ModulationVariant variant) {
    double z_max = pot.obstacle_type ? M_PI / 2.0 : 40.0;
    ProfileSolution p = profile_ode_solve(pot, z_max, 8001);
    double c0 = c0_of_potential(pot.psi);

    auto m0 = [&](double phi) {
        if (variant == ModulationVariant::Half) return 0.5;
        return std::sqrt(std::max(0.0, pot.psi(phi))) / (std::sqrt(2.0) * c0);
    };
    return simpson(p, [&](int i) { return m0(p.phi[i]) * p.dphi[i]; });
}

}  // namespace pfopt
