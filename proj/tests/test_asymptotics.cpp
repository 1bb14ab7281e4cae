#include <doctest.h>

#include "pfopt/asymptotics.hpp"

#include <cmath>

using namespace pfopt;

TEST_CASE("profile of the pure obstacle potential is sin(z)") {
    Potential1D pot = pure_obstacle_potential();
    ProfileSolution sol = profile_ode_solve(pot, M_PI / 2.0, 2001);
    double worst = 0;
    for (int i = 0; i < sol.z.size(); ++i) {
        double exact = std::sin(std::clamp(sol.z[i], -M_PI / 2.0, M_PI / 2.0));
        worst = std::max(worst, std::abs(sol.phi[i] - exact));
    }
    CHECK(worst <= 1e-8);
    // monotone, centered, saturating
    for (int i = 1; i < sol.phi.size(); ++i) CHECK(sol.phi[i] >= sol.phi[i - 1] - 1e-14);
    CHECK(std::abs(sol.phi[sol.phi.size() / 2]) <= 1e-10);
    CHECK(sol.phi[sol.phi.size() - 1] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("profile of the quartic well is tanh(z/sqrt 2)") {
    Potential1D pot = quartic_well_potential();
    ProfileSolution sol = profile_ode_solve(pot, 40.0, 4001);
    double worst = 0;
    for (int i = 0; i < sol.z.size(); ++i)
        worst = std::max(worst, std::abs(sol.phi[i] - std::tanh(sol.z[i] / std::sqrt(2.0))));
    CHECK(worst <= 1e-8);
}

TEST_CASE("relaxed potential profile approaches sin as s grows") {
    Potential1D pot = relaxed_obstacle_potential(1e6);
    ProfileSolution sol = profile_ode_solve(pot, M_PI / 2.0, 2001);
    double worst = 0;
    for (int i = 0; i < sol.z.size(); ++i) {
        if (std::abs(sol.z[i]) > M_PI / 2.0 - 0.1) continue;
        worst = std::max(worst, std::abs(sol.phi[i] - std::sin(sol.z[i])));
    }
    CHECK(worst <= 1e-2);
}

TEST_CASE("profile solver rejects potentials negative inside the well") {
    Potential1D bad{[](double y) { return y * y - 0.25; }, false, "bad"};
    CHECK_THROWS_AS(profile_ode_solve(bad, 10.0, 101), std::invalid_argument);
}

TEST_CASE("equipartition residual: analytic profiles and a negative control") {
    Potential1D obstacle = pure_obstacle_potential();
    ProfileSolution sinp;
    int n = 2001;
    sinp.z.resize(n);
    sinp.phi.resize(n);
    sinp.dphi.resize(n);
    for (int i = 0; i < n; ++i) {
        double z = -M_PI / 2.0 + M_PI * i / (n - 1);
        sinp.z[i] = z;
        sinp.phi[i] = std::sin(z);
        sinp.dphi[i] = std::cos(z);
    }
    CHECK(equipartition_residual(sinp, obstacle) <= 1e-10);

    Potential1D quartic = quartic_well_potential();
    ProfileSolution tanhp;
    tanhp.z.resize(n);
    tanhp.phi.resize(n);
    tanhp.dphi.resize(n);
    for (int i = 0; i < n; ++i) {
        double z = -20.0 + 40.0 * i / (n - 1);
        tanhp.z[i] = z;
        tanhp.phi[i] = std::tanh(z / std::sqrt(2.0));
        double c = std::cosh(z / std::sqrt(2.0));
        tanhp.dphi[i] = 1.0 / (std::sqrt(2.0) * c * c);
    }
    CHECK(equipartition_residual(tanhp, quartic) <= 1e-10);

    ProfileSolution broken = sinp;
    broken.phi *= 1.1;
    broken.dphi *= 1.1;
    CHECK(equipartition_residual(broken, obstacle) > 1e-2);
}

TEST_CASE("c0 identities: defining integral equals profile energy") {
    {
        C0Identities ids = c0_identities(pure_obstacle_potential());
        CHECK(ids.c0_def == doctest::Approx(M_PI / 4.0).epsilon(1e-6));
        CHECK(ids.c0_profile == doctest::Approx(M_PI / 4.0).epsilon(1e-6));
    }
    {
        C0Identities ids = c0_identities(quartic_well_potential());
        CHECK(ids.c0_def == doctest::Approx(std::sqrt(2.0) / 3.0).epsilon(1e-6));
        CHECK(ids.c0_profile == doctest::Approx(std::sqrt(2.0) / 3.0).epsilon(1e-6));
    }
    {
        C0Identities ids = c0_identities(relaxed_obstacle_potential(1e6));
        CHECK(std::abs(ids.c0_def - ids.c0_profile) <= 1e-6);
    }
}

TEST_CASE("q0 integral equals one for both modulation choices") {
    for (const Potential1D& pot : {pure_obstacle_potential(), quartic_well_potential()}) {
        CHECK(q0_plus_check(pot, ModulationVariant::Half) == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(q0_plus_check(pot, ModulationVariant::SqrtPsi) ==
              doctest::Approx(1.0).epsilon(1e-6));
    }
    // the relaxed well has a 1/s-wide boundary layer at the walls; the grid
    // quadrature resolves it to the acceptance tolerance, not to 1e-8
    Potential1D relaxed = relaxed_obstacle_potential(1e6);
    CHECK(q0_plus_check(relaxed, ModulationVariant::Half) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(q0_plus_check(relaxed, ModulationVariant::SqrtPsi) ==
          doctest::Approx(1.0).epsilon(1e-6));
}
