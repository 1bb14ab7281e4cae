#include <doctest.h>

#include "pfopt/material.hpp"

#include <cmath>
#include <stdexcept>

using namespace pfopt;

TEST_CASE("psi: minima at +-1, relaxed value at zero, exact split") {
    PotentialParams p{1e6};
    CHECK(std::abs(psi_family(1.0, p).psi) <= 1e-12);
    CHECK(std::abs(psi_family(-1.0, p).psi) <= 1e-12);
    double at0 = psi_family(0.0, p).psi;
    CHECK(at0 == doctest::Approx(0.5 + 0.5 / (1e6 - 1.0)).epsilon(1e-12));
    CHECK(at0 == doctest::Approx(0.5000005).epsilon(1e-7));

    for (double y : {-2.5, -1.0, -0.3, 0.0, 0.7, 1.0, 1.8}) {
        PsiValues v = psi_family(y, p);
        CHECK(v.psi == doctest::Approx(v.psi_plus + v.psi_minus).epsilon(1e-14));
    }
    CHECK_THROWS_AS(psi_family(0.0, PotentialParams{0.5}), std::invalid_argument);
}

TEST_CASE("psi nonnegative, zero only near the wells") {
    PotentialParams p{1e6};
    const int n = 100000;
    for (int i = 0; i <= n; ++i) {
        double y = -3.0 + 6.0 * i / n;
        double v = psi_family(y, p).psi;
        CHECK(v >= -1e-15);
        if (std::abs(y - 1.0) > 1e-9 && std::abs(y + 1.0) > 1e-9) CHECK(v > 0.0);
    }
}

TEST_CASE("convex-concave split has the right curvature signs") {
    PotentialParams p{1e4};
    const double h = 1e-4;
    for (int i = 0; i <= 1000; ++i) {
        double y = -3.0 + 6.0 * i / 1000.0;
        double plus2 = psi_family(y + h, p).psi_plus - 2 * psi_family(y, p).psi_plus +
                       psi_family(y - h, p).psi_plus;
        double minus2 = psi_family(y + h, p).psi_minus - 2 * psi_family(y, p).psi_minus +
                        psi_family(y - h, p).psi_minus;
        CHECK(plus2 >= -1e-9);
        CHECK(minus2 <= 1e-9);
    }
}

TEST_CASE("alpha: branch values and saturation") {
    InterpolationParams ip{1.0, 1.0, 0.99};  // scale alpha_bar/eps = 1
    CHECK(alpha_family(1.0, ip).value == doctest::Approx(0.0));
    CHECK(alpha_family(2.0, ip).value == doctest::Approx(0.0));
    double th = ip.theta;
    CHECK(alpha_family(th, ip).value ==
          doctest::Approx((1.0 - th) / (3.0 + th)).epsilon(1e-13));
    CHECK(alpha_family(-3.0, ip).value ==
          doctest::Approx(1.0 + 2.0 / (3.0 + th)).epsilon(1e-13));
    CHECK(alpha_family(-2.0, ip).deriv == doctest::Approx(0.0));

    // scaling with alpha_bar / eps
    InterpolationParams scaled{0.03, 2.5e-4, 0.99};
    CHECK(alpha_family(-3.0, scaled).value ==
          doctest::Approx((0.03 / 2.5e-4) * (1.0 + 2.0 / 3.99)).epsilon(1e-12));
}

TEST_CASE("alpha nonnegative and non-increasing on [-2, 1]") {
    InterpolationParams ip{2.0, 0.1, 0.99};
    double prev = alpha_family(-2.0, ip).value;
    for (int i = 1; i <= 3000; ++i) {
        double y = -2.0 + 3.0 * i / 3000.0;
        double v = alpha_family(y, ip).value;
        CHECK(v >= 0.0);
        CHECK(v <= prev + 1e-12);
        prev = v;
    }
    // constant for y <= -2
    CHECK(alpha_family(-2.0, ip).value == doctest::Approx(alpha_family(-7.0, ip).value));
}

TEST_CASE("derivatives match centered differences away from kinks") {
    PotentialParams pot{1e6};
    InterpolationParams ip{1.5, 0.01, 0.99};
    Material mat = Material::make(pot, ip, {ModulationVariant::SqrtPsi, 0.0, 1e-12});
    const double h = 1e-6;
    for (int i = 0; i <= 4000; ++i) {
        double y = -2.5 + 4.0 * i / 4000.0;
        if (std::abs(y - 1.0) < 1e-4 || std::abs(y + 1.0) < 1e-4) continue;
        if (std::abs(y - ip.theta) < 1e-4 || std::abs(y + 2.0) < 1e-4) continue;

        PsiValues c = psi_family(y, pot);
        double fd_plus = (psi_family(y + h, pot).psi_plus - psi_family(y - h, pot).psi_plus) /
                         (2 * h);
        double fd_minus = (psi_family(y + h, pot).psi_minus - psi_family(y - h, pot).psi_minus) /
                          (2 * h);
        CHECK(c.dpsi_plus ==
              doctest::Approx(fd_plus).epsilon(1e-6).scale(std::max(1.0, std::abs(fd_plus))));
        CHECK(c.dpsi_minus ==
              doctest::Approx(fd_minus).epsilon(1e-6).scale(std::max(1.0, std::abs(fd_minus))));

        double fd_alpha =
            (alpha_family(y + h, ip).value - alpha_family(y - h, ip).value) / (2 * h);
        CHECK(alpha_family(y, ip).deriv ==
              doctest::Approx(fd_alpha).epsilon(1e-6).scale(std::max(1.0, std::abs(fd_alpha))));

        double fd_mod = (mat.modulation(y + h).value - mat.modulation(y - h).value) / (2 * h);
        CHECK(mat.modulation(y).deriv ==
              doctest::Approx(fd_mod).epsilon(1e-6).scale(std::max(1.0, std::abs(fd_mod))));
    }
}

TEST_CASE("modulation variants") {
    PotentialParams pot{1e6};
    Material half = Material::make(pot, {}, {ModulationVariant::Half, 0.0, 1e-12});
    for (double y : {-2.0, 0.0, 0.5, 1.0}) {
        CHECK(half.modulation(y).value == doctest::Approx(0.5));
        CHECK(half.modulation(y).deriv == doctest::Approx(0.0));
    }

    Material sq = Material::make(pot, {}, {ModulationVariant::SqrtPsi, 0.0, 1e-12});
    CHECK(sq.modulation(1.0).value <= 1e-7);
    CHECK(sq.modulation(-1.0).value <= 1e-7);
    double psi0 = psi_family(0.0, pot).psi;
    CHECK(sq.modulation(0.0).value ==
          doctest::Approx(std::sqrt(psi0 / 2.0) / sq.c0).epsilon(1e-12));
}

TEST_CASE("c0: analytic anchors and the relaxed potential limit") {
    double c0_obstacle = c0_of_potential([](double y) { return 0.5 * (1.0 - y * y); });
    CHECK(c0_obstacle == doctest::Approx(M_PI / 4.0).epsilon(1e-8));

    double c0_quartic = c0_of_potential([](double y) {
        double a = 1.0 - y * y;
        return 0.25 * a * a;
    });
    CHECK(c0_quartic == doctest::Approx(std::sqrt(2.0) / 3.0).epsilon(1e-8));

    double c0_relaxed = c0_value(PotentialParams{1e6});
    CHECK(std::abs(c0_relaxed - M_PI / 4.0) <= 1e-3);
}
