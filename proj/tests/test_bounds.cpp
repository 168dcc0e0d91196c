#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ellcover/bounds.hpp"

using namespace ellcover;

namespace {

// Independent oracle: lambda must be a root of the polynomial obtained by
// isolating the radical in coverage_radius(lambda)^2 = kappa^2 and squaring:
// 4 tau L^3 + 4 tau^2 L^2 - 4 kappa^2 tau L - kappa^4 = 0.
Scalar lambda_cubic_residual(Scalar kappa, Scalar tau, Scalar L) {
  const Scalar value = 4 * tau * L * L * L + 4 * tau * tau * L * L -
                       4 * kappa * kappa * tau * L -
                       kappa * kappa * kappa * kappa;
  const Scalar scale = 4 * tau * L * L * L + 4 * tau * tau * L * L +
                       4 * kappa * kappa * tau * L +
                       kappa * kappa * kappa * kappa;
  return std::abs(value) / std::max<Scalar>(scale, 1e-300);
}

}  // namespace

TEST_CASE("coverage radius matches direct evaluation") {
  CHECK(coverage_radius(0.96, 1.0) ==
        doctest::Approx(std::sqrt(1.92 * (std::sqrt(2.96) - 1.0))).epsilon(1e-15));
  CHECK(coverage_radius(0.96, 1.0) == doctest::Approx(1.176135).epsilon(1e-5));
  CHECK(coverage_radius(1e-12, 1.0) < 1e-5);
  CHECK(coverage_radius(0.0, 1.0) == 0.0);
  CHECK(coverage_radius(0.5, 1.0) < coverage_radius(0.96, 1.0));
}

TEST_CASE("coverage radius is strictly increasing in p") {
  std::mt19937_64 rng(201);
  std::uniform_real_distribution<Scalar> u(0.01, 5.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const Scalar tau = u(rng);
    Scalar p1 = u(rng), p2 = u(rng);
    if (p1 > p2) std::swap(p1, p2);
    if (p1 == p2) continue;
    CHECK(coverage_radius(p1, tau) < coverage_radius(p2, tau));
  }
}

TEST_CASE("lambda inverts the coverage radius") {
  CHECK(lambda(0.0, 1.0) == 0.0);
  // Root of 4L^3 + 4L^2 - 4L - 1 (the kappa = tau = 1 instance of the cubic
  // oracle below), approximately 0.757.
  CHECK(lambda(1.0, 1.0) == doctest::Approx(0.75707).epsilon(2e-4));
  CHECK(lambda_cubic_residual(1.0, 1.0, lambda(1.0, 1.0)) < 1e-10);
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<Scalar> u(0.01, 3.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const Scalar tau = u(rng);
    const Scalar kappa = u(rng) * 2;
    const Scalar L = lambda(kappa, tau);
    CHECK(std::abs(coverage_radius(L, tau) - kappa) <= 1e-10 * std::max<Scalar>(1, kappa));
    CHECK(lambda_cubic_residual(kappa, tau, L) < 1e-9);
  }
}

TEST_CASE("lambda handles kappa much larger than tau") {
  for (Scalar kappa : {5.0, 20.0, 100.0}) {
    const Scalar L = lambda(kappa, 1.0);
    CHECK(std::abs(coverage_radius(L, 1.0) - kappa) <= 1e-9 * kappa);
  }
}

TEST_CASE("lambda is monotone in kappa and homogeneous") {
  std::mt19937_64 rng(203);
  std::uniform_real_distribution<Scalar> u(0.05, 2.0);
  for (int rep = 0; rep < 200; ++rep) {
    const Scalar tau = u(rng);
    Scalar k1 = u(rng), k2 = u(rng);
    if (k1 > k2) std::swap(k1, k2);
    if (k1 < k2) CHECK(lambda(k1, tau) < lambda(k2, tau));
    for (Scalar c : {2.0, 0.37}) {
      CHECK(lambda(c * k1, c * tau) ==
            doctest::Approx(c * lambda(k1, tau)).epsilon(1e-8));
    }
  }
}

TEST_CASE("density criterion examples") {
  CHECK(density_check(0.0, 1.0, 0.7));
  CHECK(density_check(0.90, 1.0, 0.96));
  CHECK_FALSE(density_check(0.92, 1.0, 0.96));
  CHECK_THROWS_AS(density_check(0.5, 1.0, 0.3), Error);
  CHECK_THROWS_AS(density_check(0.5, 1.0, 0.97), Error);
  try {
    density_check(0.5, 1.0, 0.3);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::WindowViolation);
  }
}

TEST_CASE("density criterion is monotone in kappa and p") {
  std::mt19937_64 rng(204);
  std::uniform_real_distribution<Scalar> u(0.0, 1.0);
  for (int rep = 0; rep < 500; ++rep) {
    const Scalar tau = 0.5 + 2 * u(rng);
    const Scalar p = (0.5 + 0.46 * u(rng)) * tau;
    const Scalar kappa = u(rng) * tau;
    if (density_check(kappa, tau, p)) {
      CHECK(density_check(kappa * 0.8, tau, p));
      CHECK(density_check(kappa, tau, std::min(p * 1.02, 0.96 * tau)));
    }
  }
}

TEST_CASE("maximum density ratio matches the closed form and brackets") {
  const Scalar ratio = max_density_ratio();
  CHECK(ratio == doctest::Approx(0.9128).epsilon(5.5e-4));
  CHECK(ratio == doctest::Approx(std::sqrt(2 * 0.96 * (std::sqrt(2.96) - 1) - 0.55))
                     .epsilon(1e-15));
  CHECK(ratio < std::sqrt(2 * (std::sqrt(3.0) - 1)));  // theoretical ceiling ~1.21
  CHECK(ratio > 0.387);                                // ball-based baseline
  // Consistency: density_check flips exactly at ratio * tau.
  for (Scalar tau : {0.5, 1.0, 2.0}) {
    CHECK(density_check(ratio * tau * 0.999, tau, 0.96 * tau));
    CHECK_FALSE(density_check(ratio * tau * 1.001, tau, 0.96 * tau));
  }
}

TEST_CASE("thickening coverage threshold") {
  CHECK(thickening_covered(0.0, 0.76, 1.0, 1.0));       // p > lambda
  CHECK_FALSE(thickening_covered(0.0, 0.75, 1.0, 1.0));  // p < lambda ~ 0.7566
  CHECK(thickening_covered(0.1, 0.9, 1.0, 1.0));
  CHECK_FALSE(thickening_covered(0.2, 0.9, 1.0, 1.0));
  CHECK_THROWS_AS(thickening_covered(-0.1, 0.9, 1.0, 1.0), Error);
}

TEST_CASE("density report invariants") {
  std::mt19937_64 rng(205);
  std::uniform_real_distribution<Scalar> u(0.05, 1.5);
  for (int rep = 0; rep < 300; ++rep) {
    const Scalar tau = u(rng);
    const Scalar kappa = u(rng) * tau;
    const DensityReport rep_out = density_report(kappa, tau);
    CHECK(std::abs(coverage_radius(rep_out.lambda, tau) - kappa) <= 1e-10);
    if (rep_out.density_ok) CHECK(rep_out.lambda < tau);
    CHECK(rep_out.p_window_hi == doctest::Approx(0.96 * tau));
    CHECK(rep_out.p_window_lo >= rep_out.lambda);
    CHECK(rep_out.p_window_lo >= 0.5 * tau - 1e-15);
    CHECK(rep_out.coverage_radius_at_Mp ==
          doctest::Approx(coverage_radius(0.96 * tau, tau)).epsilon(1e-12));
    CHECK(rep_out.default_constants);
    // density_ok is the criterion at the top of the window.
    CHECK(rep_out.density_ok == density_check(kappa, tau, 0.96 * tau));
  }
}

TEST_CASE("all outputs are homogeneous under uniform scaling") {
  std::mt19937_64 rng(206);
  std::uniform_real_distribution<Scalar> u(0.1, 2.0);
  for (int rep = 0; rep < 200; ++rep) {
    const Scalar tau = u(rng), p = u(rng), kappa = u(rng), c = 0.3 + u(rng);
    CHECK(coverage_radius(c * p, c * tau) ==
          doctest::Approx(c * coverage_radius(p, tau)).epsilon(1e-12));
    const Scalar pw = (0.5 + 0.4 * (p / 2.1)) * tau;  // inside the window
    CHECK(density_check(kappa, tau, pw) == density_check(c * kappa, c * tau, c * pw));
  }
}

TEST_CASE("custom constants are honored and flagged") {
  BoundsConstants custom{0.4, 0.9, 0.3};
  const DensityReport rep = density_report(0.5, 1.0, custom);
  CHECK_FALSE(rep.default_constants);
  CHECK(rep.p_window_hi == doctest::Approx(0.9));
  CHECK(max_density_ratio(custom) ==
        doctest::Approx(std::sqrt(2 * 0.9 * (std::sqrt(2.9) - 1) - 0.3)).epsilon(1e-15));
  BoundsConstants bad{0.9, 0.4, 0.3};
  CHECK_THROWS_AS(density_report(0.5, 1.0, bad), Error);
}
