#include <doctest.h>

#include <cmath>

#include "nis/specfun.hpp"
#include "oracles/bessel_series.hpp"

using nis::BesselKind;
using nis::bessel_cyl;
using nis::hankel1;

TEST_CASE("oracle agrees with independently computed reference values") {
  // 30-digit mpmath values, frozen.
  CHECK(oracle::y(0, 1.0) == doctest::Approx(0.088256964215676957983).epsilon(1e-15));
  CHECK(oracle::j(1, 33.3) == doctest::Approx(0.12386214790148009055).epsilon(1e-14));
  CHECK(oracle::y(1, 50.0) == doctest::Approx(-0.056795668562014767942).epsilon(1e-14));
  CHECK(std::abs(oracle::j(0, 2.404825557695773)) < 1e-15);
}

TEST_CASE("values at the origin and the first zero of J0") {
  CHECK(bessel_cyl(BesselKind::J, 0, 0.0) == 1.0);
  CHECK(bessel_cyl(BesselKind::J, 1, 0.0) == 0.0);
  CHECK(std::abs(bessel_cyl(BesselKind::J, 0, 2.404825557695773)) < 1e-7);
  CHECK(bessel_cyl(BesselKind::Y, 0, 1.0) == doctest::Approx(oracle::y(0, 1.0)).epsilon(1e-12));
}

TEST_CASE("J0, J1, Y0, Y1 within 1e-7 absolute of the series oracle on (0, 50]") {
  double worst = 0.0;
  for (int i = 1; i <= 2000; ++i) {
    const double x = 50.0 * i / 2000.0 - 0.0123 * (i % 3);  // avoid a purely regular lattice
    if (x <= 0.0) continue;
    for (int n = 0; n <= 1; ++n) {
      worst = std::max(worst, std::abs(bessel_cyl(BesselKind::J, n, x) - oracle::j(n, x)));
      worst = std::max(worst, std::abs(bessel_cyl(BesselKind::Y, n, x) - oracle::y(n, x)));
    }
  }
  // Small arguments where Y is dominated by the log and 1/x terms.
  for (double x : {1e-6, 1e-4, 1e-3, 0.01, 0.1, 0.5}) {
    for (int n = 0; n <= 1; ++n) {
      worst = std::max(worst, std::abs(bessel_cyl(BesselKind::J, n, x) - oracle::j(n, x)));
      const double y_ref = oracle::y(n, x);
      worst = std::max(worst, std::abs(bessel_cyl(BesselKind::Y, n, x) - y_ref) / std::max(1.0, std::abs(y_ref)));
    }
  }
  MESSAGE("worst absolute error: " << worst);
  CHECK(worst <= 1e-7);
}

TEST_CASE("Wronskian J0 Y1 - J1 Y0 = -2/(pi x)") {
  for (int i = 0; i <= 400; ++i) {
    const double x = 1e-3 * std::pow(5e4, i / 400.0);  // log-spaced on [1e-3, 50]
    const double w = bessel_cyl(BesselKind::J, 0, x) * bessel_cyl(BesselKind::Y, 1, x) -
                     bessel_cyl(BesselKind::J, 1, x) * bessel_cyl(BesselKind::Y, 0, x);
    const double expected = -2.0 / (nis::kPi * x);
    CHECK(std::abs(w - expected) <= 1e-6 * std::abs(expected));
  }
}

TEST_CASE("central difference of J0 equals -J1") {
  const double h = 1e-5;
  for (double x = 0.1; x < 50.0; x += 0.37) {
    const double d = (bessel_cyl(BesselKind::J, 0, x + h) - bessel_cyl(BesselKind::J, 0, x - h)) / (2 * h);
    CHECK(std::abs(d + bessel_cyl(BesselKind::J, 1, x)) <= 1e-5);
  }
}

TEST_CASE("hankel1 composes J and Y") {
  const auto h = hankel1(0, 1.0);
  CHECK(h.real() == bessel_cyl(BesselKind::J, 0, 1.0));
  CHECK(h.imag() == bessel_cyl(BesselKind::Y, 0, 1.0));
  for (double x : {0.3, 4.0, 11.9, 12.0, 27.0}) {
    for (int n = 0; n <= 1; ++n) {
      const auto hn = hankel1(n, x);
      CHECK(hn.real() == doctest::Approx(bessel_cyl(BesselKind::J, n, x)).epsilon(1e-14));
      CHECK(hn.imag() == doctest::Approx(bessel_cyl(BesselKind::Y, n, x)).epsilon(1e-14));
    }
  }
  // Large-argument envelope sqrt(2 / (pi x)).
  const double x = 40.0;
  CHECK(std::abs(std::abs(hankel1(0, x)) - std::sqrt(2.0 / (nis::kPi * x))) <=
        0.01 * std::sqrt(2.0 / (nis::kPi * x)));
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(bessel_cyl(BesselKind::Y, 0, 0.0), nis::DomainError);
  CHECK_THROWS_AS(bessel_cyl(BesselKind::Y, 1, -1.0), nis::DomainError);
  CHECK_THROWS_AS(bessel_cyl(BesselKind::J, 0, -0.5), nis::DomainError);
  CHECK_THROWS_AS(bessel_cyl(BesselKind::J, 2, 1.0), nis::DomainError);
  CHECK_THROWS_AS(hankel1(0, 0.0), nis::DomainError);
  CHECK_THROWS_AS(hankel1(1, -2.0), nis::DomainError);
}
