#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include "ellcover/nerve.hpp"

using namespace ellcover;

namespace {

constexpr Scalar kPi = std::numbers::pi;

// --- brute-force Betti oracle: dense GF(2) elimination -----------------

struct DenseGf2 {
  std::size_t words;
  std::vector<std::vector<std::uint64_t>> cols;

  explicit DenseGf2(std::size_t rows) : words((rows + 63) / 64) {}
  void add_col(const std::vector<std::size_t>& entries) {
    std::vector<std::uint64_t> c(words, 0);
    for (std::size_t r : entries) c[r / 64] ^= (std::uint64_t{1} << (r % 64));
    cols.push_back(std::move(c));
  }
  std::size_t rank() const {
    auto work = cols;
    std::map<std::size_t, std::size_t> owner;  // pivot row -> column
    std::size_t rk = 0;
    auto top_bit = [&](const std::vector<std::uint64_t>& c) -> long {
      for (std::size_t w = words; w-- > 0;)
        if (c[w]) return static_cast<long>(w * 64 + (63 - std::countl_zero(c[w])));
      return -1;
    };
    for (std::size_t j = 0; j < work.size(); ++j) {
      long p = top_bit(work[j]);
      while (p >= 0 && owner.count(static_cast<std::size_t>(p))) {
        const auto& other = work[owner[static_cast<std::size_t>(p)]];
        for (std::size_t w = 0; w < words; ++w) work[j][w] ^= other[w];
        p = top_bit(work[j]);
      }
      if (p >= 0) {
        owner[static_cast<std::size_t>(p)] = j;
        ++rk;
      }
    }
    return rk;
  }
};

std::vector<std::size_t> brute_betti(const SimplicialComplex& K, int up_to) {
  // index maps per dimension
  std::vector<std::map<std::vector<std::uint32_t>, std::size_t>> index(
      K.cells.size());
  for (int k = 0; k < static_cast<int>(K.cells.size()); ++k) {
    const std::size_t w = static_cast<std::size_t>(k) + 1;
    for (std::size_t i = 0; i < K.count(k); ++i) {
      std::vector<std::uint32_t> tup(K.cells[k].begin() + i * w,
                                     K.cells[k].begin() + (i + 1) * w);
      index[k][tup] = i;
    }
  }
  auto rank_d = [&](int k) -> std::size_t {  // rank of boundary_k
    if (k <= 0 || k >= static_cast<int>(K.cells.size())) return 0;
    if (K.count(k) == 0 || K.count(k - 1) == 0) return 0;
    DenseGf2 m(K.count(k - 1));
    const std::size_t w = static_cast<std::size_t>(k) + 1;
    for (std::size_t i = 0; i < K.count(k); ++i) {
      std::vector<std::size_t> entries;
      for (std::size_t drop = 0; drop < w; ++drop) {
        std::vector<std::uint32_t> face;
        for (std::size_t j = 0; j < w; ++j)
          if (j != drop) face.push_back(K.cells[k][i * w + j]);
        entries.push_back(index[k - 1].at(face));
      }
      m.add_col(entries);
    }
    return m.rank();
  };
  std::vector<std::size_t> beta(static_cast<std::size_t>(up_to) + 1, 0);
  for (int k = 0; k <= up_to; ++k)
    beta[k] = K.count(k) - rank_d(k) - rank_d(k + 1);
  return beta;
}

SimplicialComplex clique_complex(std::uint32_t V,
                                 const std::set<std::pair<std::uint32_t, std::uint32_t>>& E,
                                 int max_dim) {
  SimplicialComplex K;
  K.vertex_count = V;
  K.max_dim = max_dim;
  K.cells.assign(static_cast<std::size_t>(max_dim) + 1, {});
  for (std::uint32_t v = 0; v < V; ++v) K.cells[0].push_back(v);
  auto has = [&](std::uint32_t a, std::uint32_t b) {
    return E.count({std::min(a, b), std::max(a, b)}) > 0;
  };
  for (std::uint32_t u = 0; u < V; ++u)
    for (std::uint32_t v = u + 1; v < V; ++v)
      if (has(u, v)) {
        K.cells[1].push_back(u);
        K.cells[1].push_back(v);
      }
  if (max_dim >= 2)
    for (std::uint32_t u = 0; u < V; ++u)
      for (std::uint32_t v = u + 1; v < V; ++v)
        for (std::uint32_t w = v + 1; w < V; ++w)
          if (has(u, v) && has(u, w) && has(v, w)) {
            K.cells[2].insert(K.cells[2].end(), {u, v, w});
          }
  if (max_dim >= 3)
    for (std::uint32_t u = 0; u < V; ++u)
      for (std::uint32_t v = u + 1; v < V; ++v)
        for (std::uint32_t w = v + 1; w < V; ++w)
          for (std::uint32_t z = w + 1; z < V; ++z)
            if (has(u, v) && has(u, w) && has(u, z) && has(v, w) && has(v, z) &&
                has(w, z))
              K.cells[3].insert(K.cells[3].end(), {u, v, w, z});
  return K;
}

// --- geometric helpers ---------------------------------------------------

EllipsoidCover make_cover(const AnalyticManifold& M, const std::vector<Vector>& pts,
                          Scalar p, Scalar kappa) {
  EllipsoidCover c;
  c.tau = M.reach();
  c.p = p;
  c.kappa = kappa;
  for (const Vector& x : pts) c.samples.push_back(M.frame_at(x));
  return c;
}

std::vector<Vector> circle_points(int count, Scalar radius = 1.0) {
  std::vector<Vector> pts;
  for (int i = 0; i < count; ++i) {
    Vector x(2);
    x << radius * std::cos(2 * kPi * i / count), radius * std::sin(2 * kPi * i / count);
    pts.push_back(x);
  }
  return pts;
}

/// Farthest-point subsample of a dense grid down to covering radius target.
std::vector<Vector> fps_points(const std::vector<Vector>& grid, Scalar target,
                               Scalar* measured) {
  const std::size_t M = grid.size();
  std::vector<Scalar> dmin(M, kInfinity);
  std::vector<Vector> out;
  std::size_t cur = 0;
  while (true) {
    out.push_back(grid[cur]);
    Scalar worst = 0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < M; ++i) {
      const Scalar d = (grid[i] - grid[cur]).norm();
      if (d < dmin[i]) dmin[i] = d;
      if (dmin[i] > worst) {
        worst = dmin[i];
        arg = i;
      }
    }
    if (measured) *measured = worst;
    if (worst <= target) return out;
    cur = arg;
  }
}

Ellipsoid unit_ball(const Vector& center) {
  TangentFrame f;
  f.origin = center;
  f.tangent_basis = Matrix::Identity(center.size(), center.size());
  f.normal_basis = Matrix::Zero(center.size(), 0);
  return Ellipsoid{f, 0.5, 1.5};  // sqrt(1.5*0.5 + 0.25) = 1
}

}  // namespace

// ==========================================================================
// Betti oracle tests (reduction against dense elimination)
// ==========================================================================

TEST_CASE("triangle boundary has circle homology") {
  SimplicialComplex K;
  K.vertex_count = 3;
  K.max_dim = 1;
  K.cells = {{0, 1, 2}, {0, 1, 0, 2, 1, 2}};
  validate_complex(K);
  const auto b = betti(K, 1);
  CHECK(b == std::vector<std::size_t>{1, 1});
  CHECK(brute_betti(K, 1) == b);
}

TEST_CASE("filled triangle is contractible") {
  SimplicialComplex K;
  K.vertex_count = 3;
  K.max_dim = 2;
  K.cells = {{0, 1, 2}, {0, 1, 0, 2, 1, 2}, {0, 1, 2}};
  validate_complex(K);
  const auto b = betti(K, 2);
  CHECK(b == std::vector<std::size_t>{1, 0, 0});
  CHECK(brute_betti(K, 2) == b);
}

TEST_CASE("octahedron boundary has sphere homology") {
  // vertices: 0=+x 1=-x 2=+y 3=-y 4=+z 5=-z
  std::set<std::pair<std::uint32_t, std::uint32_t>> E;
  for (std::uint32_t u = 0; u < 6; ++u)
    for (std::uint32_t v = u + 1; v < 6; ++v)
      if (!(u / 2 == v / 2)) E.insert({u, v});
  SimplicialComplex K = clique_complex(6, E, 2);
  validate_complex(K);
  CHECK(K.count(1) == 12);
  CHECK(K.count(2) == 8);
  const auto b = betti(K, 2);
  CHECK(b == std::vector<std::size_t>{1, 0, 1});
  CHECK(brute_betti(K, 2) == b);
}

TEST_CASE("random clique complexes match the dense rank oracle") {
  std::mt19937_64 rng(401);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 60; ++rep) {
    const std::uint32_t V = 5 + static_cast<std::uint32_t>(rep % 5);
    const double prob = 0.25 + 0.5 * u(rng);
    std::set<std::pair<std::uint32_t, std::uint32_t>> E;
    for (std::uint32_t a = 0; a < V; ++a)
      for (std::uint32_t b = a + 1; b < V; ++b)
        if (u(rng) < prob) E.insert({a, b});
    SimplicialComplex K = clique_complex(V, E, 3);
    validate_complex(K);
    const auto fast = betti(K, 3);
    const auto slow = brute_betti(K, 3);
    REQUIRE(fast == slow);
    // Euler characteristic cross-check
    long long chi = K.euler_characteristic();
    long long alt = 0;
    for (int k = 0; k <= 3; ++k)
      alt += (k % 2 == 0 ? 1 : -1) * static_cast<long long>(fast[k]);
    CHECK(chi == alt);
  }
}

TEST_CASE("betti of disconnected vertices counts components") {
  SimplicialComplex K;
  K.vertex_count = 4;
  K.max_dim = 1;
  K.cells = {{0, 1, 2, 3}, {0, 1}};
  const auto b = betti(K, 1);
  CHECK(b == std::vector<std::size_t>{3, 0});
}

TEST_CASE("validate_complex rejects malformed complexes") {
  SimplicialComplex bad;
  bad.vertex_count = 3;
  bad.max_dim = 1;
  bad.cells = {{0, 1, 2}, {1, 0}};  // decreasing tuple
  CHECK_THROWS_AS(validate_complex(bad), Error);
  SimplicialComplex open_tri;
  open_tri.vertex_count = 3;
  open_tri.max_dim = 2;
  open_tri.cells = {{0, 1, 2}, {0, 1, 0, 2}, {0, 1, 2}};  // missing edge (1,2)
  CHECK_THROWS_AS(validate_complex(open_tri), Error);
}

// ==========================================================================
// intersect
// ==========================================================================

TEST_CASE("single ellipsoid yields its center as witness") {
  Vector c(3);
  c << 1.0, -2.0, 0.5;
  const auto r = intersect({unit_ball(c)});
  REQUIRE(r.status == IntersectStatus::Witness);
  CHECK((r.witness - c).norm() < 1e-12);
}

TEST_CASE("separated unit balls are disjoint with a positive form gap") {
  Vector c1 = Vector::Zero(3), c2 = Vector::Zero(3);
  c2(0) = 3.0;
  const auto r = intersect({unit_ball(c1), unit_ball(c2)});
  REQUIRE(r.status == IntersectStatus::Disjoint);
  // The stall point sits on the boundary of the second ball, distance 2 from
  // the first center: its form there is 4, so the reported gap is 3.
  CHECK(r.gap == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(r.gap > 0);
}

TEST_CASE("adjacent circle-cover ellipsoids share a witness") {
  const auto M = AnalyticManifold::circle(1.0);
  const auto cover = make_cover(M, circle_points(30), 0.7, 0.105);
  const Ellipsoid e0 = cover.ellipsoid(0), e1 = cover.ellipsoid(1);
  const auto r = intersect({e0, e1});
  REQUIRE(r.status == IntersectStatus::Witness);
  CHECK(e0.quadratic_form(r.witness) <= 1 + 1e-9);
  CHECK(e1.quadratic_form(r.witness) <= 1 + 1e-9);
}

TEST_CASE("intersect verdict is invariant under permutation") {
  const auto M = AnalyticManifold::circle(1.0);
  const auto cover = make_cover(M, circle_points(30), 0.7, 0.105);
  std::vector<Ellipsoid> tri{cover.ellipsoid(0), cover.ellipsoid(1),
                             cover.ellipsoid(2)};
  const auto base = intersect(tri).status;
  std::vector<int> perm{0, 1, 2};
  do {
    std::vector<Ellipsoid> fam{tri[perm[0]], tri[perm[1]], tri[perm[2]]};
    CHECK(intersect(fam).status == base);
  } while (std::next_permutation(perm.begin(), perm.end()));

  // Disjoint family: antipodal ellipsoids on the circle
  std::vector<Ellipsoid> far{cover.ellipsoid(0), cover.ellipsoid(15)};
  const auto d1 = intersect(far).status;
  std::swap(far[0], far[1]);
  CHECK(intersect(far).status == d1);
  CHECK(d1 == IntersectStatus::Disjoint);
}

TEST_CASE("intersect validates its inputs") {
  CHECK_THROWS_AS(intersect({}), Error);
  CHECK_THROWS_AS(intersect({unit_ball(Vector::Zero(3))}, 0.0), Error);
}

// ==========================================================================
// build_nerve
// ==========================================================================

TEST_CASE("single sample gives one vertex and no edges") {
  const auto M = AnalyticManifold::circle(1.0);
  Vector x(2);
  x << 1, 0;
  const auto cover = make_cover(M, {x}, 0.7, 2.0);
  const auto built = build_nerve(cover, 1);
  CHECK(built.complex.vertex_count == 1);
  CHECK(built.complex.count(0) == 1);
  CHECK(built.complex.count(1) == 0);
  CHECK(built.warnings.empty());
}

TEST_CASE("two overlapping ellipsoids give one edge") {
  const auto M = AnalyticManifold::circle(1.0);
  const auto pts = circle_points(30);
  const auto cover = make_cover(M, {pts[0], pts[1]}, 0.7, 2.0);
  const auto built = build_nerve(cover, 1);
  CHECK(built.complex.count(0) == 2);
  CHECK(built.complex.count(1) == 1);
  CHECK(built.complex.cells[1] == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("thirty-point circle cover: cycle 1-skeleton and circle homology") {
  const auto M = AnalyticManifold::circle(1.0);
  const auto cover = make_cover(M, circle_points(30), 0.7, 0.105);

  const auto flat = build_nerve(cover, 2);
  validate_complex(flat.complex);
  // connected with every vertex on at least two edges
  std::vector<int> deg(30, 0);
  for (std::size_t e = 0; e < flat.complex.count(1); ++e) {
    deg[flat.complex.cells[1][2 * e]]++;
    deg[flat.complex.cells[1][2 * e + 1]]++;
  }
  for (int d : deg) CHECK(d >= 2);
  const auto b1 = betti(flat.complex, 1);
  CHECK(b1 == std::vector<std::size_t>{1, 1});

  // with tetrahedra included the three Betti numbers are those of a circle
  const auto full = build_nerve(cover, 3);
  validate_complex(full.complex);
  const auto b = betti(full.complex, 2);
  CHECK(b == std::vector<std::size_t>{1, 1, 0});
  CHECK(full.warnings.empty());
}

TEST_CASE("nerve witnesses are sound and the complex is downward closed") {
  const auto M = AnalyticManifold::circle(1.0);
  const auto cover = make_cover(M, circle_points(30), 0.7, 0.105);
  const auto built = build_nerve(cover, 3);
  // every stored triangle really has a common point
  for (std::size_t t = 0; t < built.complex.count(2); ++t) {
    std::vector<Ellipsoid> fam;
    for (int j = 0; j < 3; ++j)
      fam.push_back(cover.ellipsoid(built.complex.cells[2][3 * t + j]));
    const auto r = intersect(fam);
    REQUIRE(r.status == IntersectStatus::Witness);
    for (const auto& e : fam) CHECK(e.quadratic_form(r.witness) <= 1 + 1e-9);
  }
}

TEST_CASE("nerve construction is deterministic across worker counts") {
  const auto M = AnalyticManifold::circle(1.0);
  const auto cover = make_cover(M, circle_points(30), 0.7, 0.105);
  const auto w1 = build_nerve(cover, 3, 1e-9, 1);
  const auto w4 = build_nerve(cover, 3, 1e-9, 4);
  CHECK(w1.complex.cells == w4.complex.cells);
  CHECK(w1.warnings == w4.warnings);
}

TEST_CASE("build_nerve validates its inputs") {
  const auto M = AnalyticManifold::circle(1.0);
  const auto cover = make_cover(M, circle_points(8), 0.7, 1.0);
  CHECK_THROWS_AS(build_nerve(cover, 0), Error);
  CHECK_THROWS_AS(build_nerve(cover, 4), Error);
  CHECK_THROWS_AS(build_nerve(cover, 2, 0.0), Error);
}

// ==========================================================================
// Homology recovery on model manifolds
// ==========================================================================

TEST_CASE("sphere cover recovers sphere homology") {
  const auto M = AnalyticManifold::sphere(1.0);
  const auto grid = M.parameter_grid(12);  // 144 Fibonacci points
  REQUIRE(grid.size() >= 100);
  const auto cover = make_cover(M, grid, 0.7, 0.4);
  const auto built = build_nerve(cover, 3);
  const auto b = betti(built.complex, 2);
  CHECK(b == std::vector<std::size_t>{1, 0, 1});

  // Euler characteristic of the complex equals the alternating Betti sum
  const auto b3 = betti(built.complex, 3);
  long long alt = 0;
  for (int k = 0; k <= 3; ++k)
    alt += (k % 2 == 0 ? 1 : -1) * static_cast<long long>(b3[k]);
  CHECK(built.complex.euler_characteristic() == alt);
}

TEST_CASE("torus cover recovers torus homology") {
  const auto M = AnalyticManifold::torus(2.0, 0.5);
  const Scalar tau = M.reach();
  Scalar kappa = 0;
  const auto pts = fps_points(M.parameter_grid(120), 0.4 * tau, &kappa);
  REQUIRE(pts.size() >= 400);
  REQUIRE(kappa <= 0.4 * tau);
  const auto cover = make_cover(M, pts, 0.7 * tau, kappa);
  // the homotopy window requires p strictly between lambda and the reach
  CHECK(cover.p < tau);
  const auto built = build_nerve(cover, 3);
  const auto b = betti(built.complex, 2);
  CHECK(b == std::vector<std::size_t>{1, 2, 1});
}
