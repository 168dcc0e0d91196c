#pragma once

#include <Eigen/Dense>
#include <random>

#include "ellcover/geometry.hpp"

namespace ellcover::testing {

using Rng = std::mt19937_64;

inline Vector random_gaussian(int n, Rng& rng) {
  std::normal_distribution<Scalar> g;
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

inline Vector random_unit(int n, Rng& rng) {
  Vector v = random_gaussian(n, rng);
  while (v.norm() < 1e-6) v = random_gaussian(n, rng);
  return v.normalized();
}

/// Random orthonormal frame at a random origin: QR of a Gaussian matrix,
/// first m columns tangent, the rest normal.
inline TangentFrame random_frame(int n, int m, Rng& rng) {
  Matrix g(n, n);
  std::normal_distribution<Scalar> dist;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = dist(rng);
  Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
  TangentFrame f;
  f.origin = random_gaussian(n, rng);
  f.tangent_basis = q.leftCols(m);
  f.normal_basis = q.rightCols(n - m);
  return f;
}

/// Point with prescribed squared tangential/normal components relative to a
/// frame, in random directions within each subspace.
inline Vector point_with_components(const TangentFrame& f, Scalar A, Scalar B,
                                    Rng& rng) {
  Vector yT = random_unit(f.tangent_dim(), rng) * std::sqrt(A);
  Vector yN = random_unit(f.normal_dim(), rng) * std::sqrt(B);
  return f.origin + f.tangent_basis * yT + f.normal_basis * yN;
}

/// Uniformly random point on the boundary of an ellipsoid (frame coordinates
/// scaled onto the level set).
inline Vector random_boundary_point(const Ellipsoid& e, Rng& rng) {
  Vector yT = random_gaussian(e.frame.tangent_dim(), rng);
  Vector yN = random_gaussian(e.frame.normal_dim(), rng);
  const Scalar a2 = e.tau * e.p + e.p * e.p, b2 = e.p * e.p;
  const Scalar form = yT.squaredNorm() / a2 + yN.squaredNorm() / b2;
  const Scalar s = 1 / std::sqrt(form);
  return e.frame.origin + e.frame.tangent_basis * (yT * s) +
         e.frame.normal_basis * (yN * s);
}

}  // namespace ellcover::testing
