#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ellcover/geometry.hpp"
#include "test_util.hpp"

using namespace ellcover;
using testing::Rng;

namespace {

Scalar depth_residual(Scalar A, Scalar B, Scalar tau, Scalar q) {
  return A / (tau * q + q * q) + B / (q * q) - 1;
}

}  // namespace

TEST_CASE("tangent frames validate orthonormality") {
  Rng rng(101);
  for (int n = 2; n <= 6; ++n) {
    for (int m = 1; m < n; ++m) {
      TangentFrame f = testing::random_frame(n, m, rng);
      CHECK(f.gram_deviation() < 1e-12);
      CHECK_NOTHROW(f.require_valid());
    }
  }
  TangentFrame bad = testing::random_frame(3, 1, rng);
  bad.tangent_basis *= 1.5;
  CHECK_THROWS_AS(bad.require_valid(), Error);
  TangentFrame incomplete = testing::random_frame(4, 2, rng);
  incomplete.normal_basis = incomplete.normal_basis.leftCols(1).eval();
  CHECK_THROWS_AS(incomplete.require_valid(), Error);
}

TEST_CASE("split components decompose the squared distance") {
  Rng rng(102);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + static_cast<int>(rng() % 5);
    const int m = 1 + static_cast<int>(rng() % (n - 1));
    TangentFrame f = testing::random_frame(n, m, rng);
    Vector x = testing::random_gaussian(n, rng) * 3;
    auto c = split_components(f, x);
    const Scalar d2 = (x - f.origin).squaredNorm();
    CHECK(c.tangent_sq >= 0);
    CHECK(c.normal_sq >= 0);
    CHECK(std::abs(c.tangent_sq + c.normal_sq - d2) <= 1e-10 * (1 + d2));
  }
}

TEST_CASE("depth root matches hand-checkable boundary data") {
  // 1/(q + q^2) + 0.5/q^2 = 1 at q = 1 for tau = 1.
  CHECK(depth_root(1.0, 0.5, 1.0) == doctest::Approx(1.0).epsilon(1e-13));
  // Closed forms on the axes.
  CHECK(depth_root(0.0, 2.25, 7.0) == doctest::Approx(1.5).epsilon(1e-14));
  const Scalar tau = 2.0, A = 3.0;
  const Scalar expect = (std::sqrt(tau * tau + 4 * A) - tau) / 2;
  CHECK(depth_root(A, 0.0, tau) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("depth root is exact on constructed boundary points") {
  Rng rng(103);
  std::uniform_real_distribution<Scalar> unit(0.0, 1.0);
  for (Scalar tau : {0.5, 1.0, 2.0}) {
    for (int rep = 0; rep < 2000; ++rep) {
      const Scalar p = 0.05 + 2.0 * unit(rng);
      const Scalar s = unit(rng);
      const Scalar A = s * (tau * p + p * p);
      const Scalar B = (1 - s) * (p * p);
      if (A == 0 && B == 0) continue;
      const Scalar q = depth_root(A, B, tau);
      CHECK(std::abs(q - p) <= 1e-12 * p);
    }
  }
}

TEST_CASE("depth root residual stays below 1e-12 on random inputs") {
  Rng rng(104);
  std::uniform_real_distribution<Scalar> mag(-6.0, 4.0);
  Scalar worst = 0;
  for (Scalar tau : {0.5, 1.0, 2.0}) {
    for (int rep = 0; rep < 100000; ++rep) {
      const Scalar A = std::pow(10.0, mag(rng));
      const Scalar B = std::pow(10.0, mag(rng));
      const Scalar q = depth_root(A, B, tau);
      REQUIRE(q > 0);
      worst = std::max(worst, std::abs(depth_residual(A, B, tau, q)));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("depth root grows with either component") {
  const Scalar q0 = depth_root(1.0, 1.0, 1.0);
  CHECK(depth_root(1.5, 1.0, 1.0) > q0);
  CHECK(depth_root(1.0, 1.5, 1.0) > q0);
}

TEST_CASE("depth root rejects out-of-domain input") {
  CHECK_THROWS_AS(depth_root(0.0, 0.0, 1.0), Error);
  CHECK_THROWS_AS(depth_root(-1.0, 1.0, 1.0), Error);
  CHECK_THROWS_AS(depth_root(1.0, -1.0, 1.0), Error);
  CHECK_THROWS_AS(depth_root(1.0, 1.0, 0.0), Error);
  CHECK_THROWS_AS(depth_root(1.0, 1.0, kInfinity), Error);
  try {
    depth_root(0.0, 0.0, 1.0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UndefinedInput);
  }
}

TEST_CASE("pep recovers the thickening parameter of constructed points") {
  Rng rng(105);
  std::uniform_real_distribution<Scalar> unit(0.0, 1.0);
  for (Scalar tau : {0.5, 1.0, 2.0}) {
    for (int rep = 0; rep < 500; ++rep) {
      const int n = 2 + static_cast<int>(rng() % 4);
      const int m = 1 + static_cast<int>(rng() % (n - 1));
      TangentFrame f = testing::random_frame(n, m, rng);
      const Scalar p = 0.1 + unit(rng);
      const Scalar s = unit(rng);
      const Scalar A = s * (tau * p + p * p);
      const Scalar B = (1 - s) * (p * p);
      Vector x = testing::point_with_components(f, A, B, rng);
      CHECK(pep(f, tau, x) == doctest::Approx(p).epsilon(1e-10));
    }
  }
}

TEST_CASE("pep for a slab is the normal distance") {
  Rng rng(106);
  TangentFrame f = testing::random_frame(5, 2, rng);
  Vector x = testing::point_with_components(f, 4.0, 0.49, rng);
  CHECK(pep(f, kInfinity, x) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("ellipsoid membership classifies boundary, inside and outside") {
  Rng rng(107);
  for (Scalar tau : {0.5, 1.0, 2.0}) {
    Ellipsoid e{testing::random_frame(4, 2, rng), 0.3, tau};
    for (int rep = 0; rep < 200; ++rep) {
      Vector b = testing::random_boundary_point(e, rng);
      CHECK(e.membership(b) == Membership::Boundary);
      CHECK(e.quadratic_form(b) == doctest::Approx(1.0).epsilon(1e-12));
      Vector in = e.frame.origin + (b - e.frame.origin) * 0.9;
      Vector out = e.frame.origin + (b - e.frame.origin) * 1.1;
      CHECK(e.membership(in) == Membership::Inside);
      CHECK(e.membership(out) == Membership::Outside);
    }
  }
}

TEST_CASE("slab membership only sees the normal component") {
  Rng rng(108);
  TangentFrame f = testing::random_frame(4, 2, rng);
  Ellipsoid slab{f, 0.5, kInfinity};
  Vector far_tangent = testing::point_with_components(f, 1e6, 0.2 * 0.2, rng);
  CHECK(slab.membership(far_tangent) == Membership::Inside);
  Vector off = testing::point_with_components(f, 1e6, 0.7 * 0.7, rng);
  CHECK(slab.membership(off) == Membership::Outside);
}

TEST_CASE("exterior projection lands on the boundary along the normal") {
  Rng rng(109);
  for (Scalar tau : {0.5, 1.0, 2.0}) {
    for (int rep = 0; rep < 300; ++rep) {
      const int n = 2 + static_cast<int>(rng() % 4);
      const int m = 1 + static_cast<int>(rng() % (n - 1));
      Ellipsoid e{testing::random_frame(n, m, rng), 0.4, tau};
      Vector x = e.frame.origin + testing::random_gaussian(n, rng) * 2.0;
      if (e.quadratic_form(x) <= 1.0 + 1e-9) continue;
      Vector z = closest_point_in(e, x);
      CHECK(std::abs(e.quadratic_form(z) - 1) < 1e-10);
      // Optimality: no sampled boundary point is closer.
      const Scalar d = (x - z).norm();
      for (int k = 0; k < 50; ++k) {
        Vector w = testing::random_boundary_point(e, rng);
        CHECK(d <= (x - w).norm() + 1e-9);
      }
      // Stationarity: x - z is parallel to the outward gradient at z.
      const Scalar a2 = e.tau * e.p + e.p * e.p, b2 = e.p * e.p;
      Vector zT = e.frame.tangent_basis.transpose() * (z - e.frame.origin);
      Vector zN = e.frame.normal_basis.transpose() * (z - e.frame.origin);
      Vector grad = e.frame.tangent_basis * (zT / a2) + e.frame.normal_basis * (zN / b2);
      const Scalar align = (x - z).normalized().dot(grad.normalized());
      CHECK(align == doctest::Approx(1.0).epsilon(1e-8));
    }
  }
}

TEST_CASE("projection of an interior point is the identity") {
  Rng rng(110);
  Ellipsoid e{testing::random_frame(3, 1, rng), 0.5, 1.0};
  Vector b = testing::random_boundary_point(e, rng);
  Vector in = e.frame.origin + (b - e.frame.origin) * 0.5;
  CHECK((closest_point_in(e, in) - in).norm() == 0.0);
}

TEST_CASE("interior boundary projection beats dense boundary sampling") {
  Rng rng(111);
  // 2D case with an exhaustive angular oracle.
  Ellipsoid e{testing::random_frame(2, 1, rng), 1.0, 3.0};  // a = 2, b = 1
  const Scalar a = 2, b = 1;
  auto coords_point = [&](Scalar ct, Scalar cn) {
    Vector yT(1), yN(1);
    yT << ct;
    yN << cn;
    return Vector(e.frame.origin + e.frame.tangent_basis * yT +
                  e.frame.normal_basis * yN);
  };
  auto boundary_at = [&](Scalar t) {
    return coords_point(a * std::cos(t), b * std::sin(t));
  };
  std::uniform_real_distribution<Scalar> unit(-1.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    const Scalar ct = unit(rng) * a * 0.99, cn = unit(rng) * b * 0.99;
    Vector x = coords_point(ct, cn);
    if (e.quadratic_form(x) >= 1) continue;
    Vector z = closest_boundary_point(e, x);
    CHECK(std::abs(e.quadratic_form(z) - 1) < 1e-9);
    Scalar best = kInfinity;
    for (int k = 0; k < 20000; ++k) {
      const Scalar t = 2 * std::numbers::pi * k / 20000;
      best = std::min(best, (x - boundary_at(t)).norm());
    }
    CHECK((x - z).norm() <= best + 1e-6);
  }
}

TEST_CASE("interior boundary projection handles the tangent-plane medial case") {
  Rng rng(112);
  // a = 2, b = 1: for x = 0.5 * tangent axis the nearest boundary point
  // detaches from the plane; squared distance is 1/36 + 32/36 = 33/36.
  Ellipsoid e{testing::random_frame(2, 1, rng), 1.0, 3.0};
  Vector x = e.frame.origin + e.frame.tangent_basis.col(0) * 0.5;
  Vector z = closest_boundary_point(e, x);
  CHECK(std::abs(e.quadratic_form(z) - 1) < 1e-9);
  CHECK((x - z).norm() == doctest::Approx(std::sqrt(33.0) / 6).epsilon(1e-9));
  // Center of the ellipsoid: inradius.
  Vector zc = closest_boundary_point(e, e.frame.origin);
  CHECK((zc - e.frame.origin).norm() == doctest::Approx(1.0).epsilon(1e-9));
  // Far along the tangent axis (past the focal scale), the in-plane radial
  // point wins instead.
  Vector xf = e.frame.origin + e.frame.tangent_basis.col(0) * 1.9;
  Vector zf = closest_boundary_point(e, xf);
  CHECK((xf - zf).norm() == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("boundary projection from outside matches closest_point_in") {
  Rng rng(113);
  Ellipsoid e{testing::random_frame(4, 2, rng), 0.4, 1.5};
  for (int rep = 0; rep < 100; ++rep) {
    Vector x = e.frame.origin + testing::random_gaussian(4, rng) * 2.0;
    if (e.quadratic_form(x) <= 1 + 1e-9) continue;
    CHECK((closest_boundary_point(e, x) - closest_point_in(e, x)).norm() < 1e-12);
  }
}

TEST_CASE("slab projections clamp the normal component") {
  Rng rng(114);
  TangentFrame f = testing::random_frame(3, 1, rng);
  Ellipsoid slab{f, 0.5, kInfinity};
  Vector x = testing::point_with_components(f, 9.0, 4.0, rng);
  Vector z = closest_point_in(slab, x);
  auto c = split_components(f, z);
  CHECK(std::sqrt(c.normal_sq) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::sqrt(c.tangent_sq) == doctest::Approx(3.0).epsilon(1e-12));
  Vector inside = testing::point_with_components(f, 1.0, 0.01, rng);
  CHECK((closest_point_in(slab, inside) - inside).norm() == 0.0);
  Vector zb = closest_boundary_point(slab, inside);
  auto cb = split_components(f, zb);
  CHECK(std::sqrt(cb.normal_sq) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("cone distance bound formula and degenerate limits") {
  CHECK(cone_distance_bound(0.0, 0.3, 1.0) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(cone_distance_bound(3.0, 0.0, 2.0) ==
        doctest::Approx(std::sqrt(9.0 + 4.0) - 2.0).epsilon(1e-15));
  CHECK(cone_distance_bound(1.0, 1.0, kInfinity) == doctest::Approx(1.0));
  CHECK_THROWS_AS(cone_distance_bound(-1.0, 0.0, 1.0), Error);
}

TEST_CASE("circle distance, projection and frames") {
  auto c = AnalyticManifold::circle(2.0);
  CHECK(c.reach() == 2.0);
  Vector x(2);
  x << 3.0, 4.0;  // norm 5
  CHECK(c.distance(x) == doctest::Approx(3.0).epsilon(1e-15));
  Vector pr = c.project(x);
  CHECK(pr.norm() == doctest::Approx(2.0).epsilon(1e-14));
  CHECK((pr - x * (2.0 / 5.0)).norm() < 1e-14);
  TangentFrame f = c.frame_at(pr);
  CHECK(f.gram_deviation() < 1e-12);
  CHECK(std::abs(f.normal_basis.col(0).dot(pr.normalized())) ==
        doctest::Approx(1.0).epsilon(1e-12));
  Vector center = Vector::Zero(2);
  CHECK_THROWS_AS(c.project(center), Error);
}

TEST_CASE("sphere distance, projection and frames") {
  auto s = AnalyticManifold::sphere(1.5);
  Rng rng(115);
  for (int rep = 0; rep < 100; ++rep) {
    Vector x = testing::random_gaussian(3, rng) * 2;
    if (x.norm() < 1e-6) continue;
    CHECK(s.distance(x) == doctest::Approx(std::abs(x.norm() - 1.5)).epsilon(1e-12));
    Vector pr = s.project(x);
    CHECK(pr.norm() == doctest::Approx(1.5).epsilon(1e-12));
    TangentFrame f = s.frame_at(pr);
    CHECK(f.gram_deviation() < 1e-10);
    CHECK(f.tangent_dim() == 2);
    CHECK(std::abs(f.normal_basis.col(0).dot(pr.normalized())) ==
          doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("torus projection agrees with a dense grid oracle") {
  auto t = AnalyticManifold::torus(2.0, 0.5);
  CHECK(t.reach() == doctest::Approx(0.5));
  auto grid = t.parameter_grid(400);
  Rng rng(116);
  std::uniform_real_distribution<Scalar> box(-3.0, 3.0);
  int tested = 0;
  while (tested < 40) {
    Vector x(3);
    x << box(rng), box(rng), box(rng) / 3;
    const Scalar rho = std::hypot(x[0], x[1]);
    if (rho < 0.2) continue;  // stay away from the medial axis
    Vector core(3);
    core << x[0] * (2.0 / rho), x[1] * (2.0 / rho), 0.0;
    if ((x - core).norm() < 0.1) continue;  // and from the core circle
    ++tested;
    Vector pr = t.project(x);
    CHECK(t.distance(pr) < 1e-12);
    CHECK((x - pr).norm() == doctest::Approx(t.distance(x)).epsilon(1e-12));
    Scalar best = kInfinity;
    for (const auto& g : grid) best = std::min(best, (x - g).norm());
    CHECK(t.distance(x) <= best + 1e-12);
    // Triangle inequality: the nearest grid point is at most half a grid cell
    // (diagonal ~0.02 for the 400x400 grid) farther than the true projection.
    CHECK(best - t.distance(x) < 0.025);
  }
  Vector axis(3);
  axis << 0.0, 0.0, 0.7;
  CHECK_THROWS_AS(t.project(axis), Error);
  Vector core_pt(3);
  core_pt << 2.0, 0.0, 0.0;
  CHECK_THROWS_AS(t.project(core_pt), Error);
}

TEST_CASE("torus frames are orthonormal with the correct normal direction") {
  auto t = AnalyticManifold::torus(2.0, 0.5);
  auto grid = t.parameter_grid(25);
  for (const auto& g : grid) {
    TangentFrame f = t.frame_at(g);
    CHECK(f.gram_deviation() < 1e-12);
    const Scalar rho = std::hypot(g[0], g[1]);
    Vector core(3);
    core << g[0] * (2.0 / rho), g[1] * (2.0 / rho), 0.0;
    Vector w = (g - core).normalized();
    CHECK(std::abs(f.normal_basis.col(0).dot(w)) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("affine subspace projection and frames") {
  auto a = AnalyticManifold::affine(2, 4);
  CHECK(a.reach() == kInfinity);
  Vector x(4);
  x << 1.0, 2.0, 3.0, 4.0;
  CHECK(a.distance(x) == doctest::Approx(5.0).epsilon(1e-15));
  Vector pr = a.project(x);
  CHECK(pr[0] == 1.0);
  CHECK(pr[1] == 2.0);
  CHECK(pr[2] == 0.0);
  CHECK(pr[3] == 0.0);
  TangentFrame f = a.frame_at(pr);
  CHECK(f.gram_deviation() == 0.0);
  CHECK_THROWS_AS(a.parameter_grid(10), Error);
}

TEST_CASE("parameter grids lie on their manifolds") {
  for (auto m : {AnalyticManifold::circle(1.0), AnalyticManifold::sphere(2.0),
                 AnalyticManifold::torus(2.0, 0.5)}) {
    auto grid = m.parameter_grid(20);
    CHECK(grid.size() >= 20);
    for (const auto& g : grid) CHECK(m.distance(g) < 1e-9);
  }
}

TEST_CASE("projection is idempotent") {
  Rng rng(117);
  auto t = AnalyticManifold::torus(2.0, 0.5);
  for (int rep = 0; rep < 50; ++rep) {
    Vector x = testing::random_gaussian(3, rng) * 2;
    const Scalar rho = std::hypot(x[0], x[1]);
    if (rho < 0.3) continue;
    Vector pr = t.project(x);
    CHECK((t.project(pr) - pr).norm() < 1e-12);
  }
}
