#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ellcover/geometry.hpp"

namespace ellcover {

/// A cover of a manifold sample by tangent-normal ellipsoids with shared
/// shape parameters: every sample contributes the ellipsoid with tangent
/// semi-axes sqrt(tau*p + p^2) and normal semi-axes p in its own frame.
struct EllipsoidCover {
  Scalar tau = 1.0;
  Scalar p = 0.0;
  Scalar kappa = 0.0;  ///< declared Hausdorff density of the sample
  std::vector<TangentFrame> samples;

  std::size_t size() const { return samples.size(); }
  Ellipsoid ellipsoid(std::size_t i) const {
    return Ellipsoid{samples.at(i), p, tau};
  }
};

/// Finite simplicial complex with explicit cells up to max_dim.
/// cells[k] stores the k-simplices flattened as (k+1)-tuples of vertex
/// indices; each tuple is strictly increasing and the tuples are sorted
/// lexicographically.
struct SimplicialComplex {
  std::uint32_t vertex_count = 0;
  int max_dim = 0;
  std::vector<std::vector<std::uint32_t>> cells;

  std::size_t count(int k) const {
    if (k < 0 || k >= static_cast<int>(cells.size())) return 0;
    if (cells[k].empty()) return 0;
    return cells[k].size() / static_cast<std::size_t>(k + 1);
  }
  long long euler_characteristic() const {
    long long chi = 0;
    for (int k = 0; k <= max_dim; ++k)
      chi += (k % 2 == 0 ? 1 : -1) * static_cast<long long>(count(k));
    return chi;
  }
};

/// Throws DomainViolation unless tuples are strictly increasing, each
/// dimension is lexicographically sorted without duplicates, and the complex
/// is downward closed.
void validate_complex(const SimplicialComplex& K);

enum class IntersectStatus : std::uint8_t { Witness, Disjoint, Inconclusive };

struct IntersectResult {
  IntersectStatus status = IntersectStatus::Inconclusive;
  Vector witness;        ///< common point (Witness only)
  Scalar gap = 0.0;      ///< max over ellipsoids of (form - 1) at the stall
                         ///< point (Disjoint only)
  std::uint32_t iterations = 0;
};

/// Decides whether a family of ellipsoids has a common point by cyclic
/// alternating projection onto the closed convex bodies, starting from the
/// mean of the centers.  A point with every quadratic form <= 1 + tol is a
/// Witness; a stalled cycle (displacement < tol^2) with a positive gap is
/// Disjoint; hitting max_iters without either verdict is Inconclusive.
IntersectResult intersect(const std::vector<Ellipsoid>& ellipsoids,
                          Scalar tol = 1e-9, std::uint32_t max_iters = 10000);

struct BuiltNerve {
  SimplicialComplex complex;
  /// Candidate simplices whose intersection test was Inconclusive; they are
  /// excluded from the complex.
  std::vector<std::vector<std::uint32_t>> warnings;
};

/// Builds the nerve of the cover up to dimension max_dim (1..3): one vertex
/// per sample, a k-simplex whenever the k+1 ellipsoids share a common point.
/// Candidates are drawn from cliques of the intersection graph and only from
/// fully confirmed faces, so the result is downward closed by construction.
BuiltNerve build_nerve(const EllipsoidCover& cover, int max_dim,
                       Scalar tol = 1e-9, unsigned workers = 0);

/// Betti numbers beta_0..beta_{up_to_dim} over Z/2, computed from boundary
/// ranks (union-find in degree 0, streaming column reduction above).
/// Dimensions beyond the stored cells use an empty higher boundary.
std::vector<std::size_t> betti(const SimplicialComplex& K, int up_to_dim);

}  // namespace ellcover
