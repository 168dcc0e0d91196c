#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "ellcover/errors.hpp"

namespace ellcover {

using Scalar = double;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr Scalar kInfinity = std::numeric_limits<Scalar>::infinity();

/// Orthonormal tangent/normal frame at a point of a submanifold.
/// `tangent_basis` is n x m and `normal_basis` is n x (n-m); together their
/// columns must form an orthonormal basis of the ambient space.
struct TangentFrame {
  Vector origin;
  Matrix tangent_basis;
  Matrix normal_basis;

  int ambient_dim() const { return static_cast<int>(origin.size()); }
  int tangent_dim() const { return static_cast<int>(tangent_basis.cols()); }
  int normal_dim() const { return static_cast<int>(normal_basis.cols()); }

  /// Largest absolute deviation of [T N]^T [T N] from the identity.
  Scalar gram_deviation() const;

  /// Throws ErrorKind::FrameInvalid if the combined basis is not square or
  /// deviates from orthonormality by more than `tol`.
  void require_valid(Scalar tol = 1e-8) const;
};

/// Squared tangential / normal components of x - origin in a frame.
struct SplitComponents {
  Scalar tangent_sq;  ///< |T^T (x - origin)|^2
  Scalar normal_sq;   ///< |N^T (x - origin)|^2
};

SplitComponents split_components(const TangentFrame& frame, const Vector& x);

/// Unique q > 0 with A/(tau*q + q^2) + B/q^2 = 1 (A, B >= 0, not both zero,
/// 0 < tau < infinity).  Equivalently the positive root of
/// q^3 + tau q^2 - (A+B) q - tau B.  Residual of the defining equation is
/// driven below 1e-12.
Scalar depth_root(Scalar A, Scalar B, Scalar tau);

/// Depth of x relative to a tangent frame: the p such that x lies on the
/// boundary of the p-thickened ellipsoid.  For tau = infinity the ellipsoid
/// degenerates to a slab and the depth is the normal distance.
Scalar pep(const TangentFrame& frame, Scalar tau, const Vector& x);

enum class Membership { Inside, Boundary, Outside };

/// Tangent-aligned ellipsoid: semi-axis sqrt(tau*p + p^2) along every tangent
/// direction and p along every normal direction.  tau = infinity yields the
/// slab of half-width p around the affine tangent space.
struct Ellipsoid {
  TangentFrame frame;
  Scalar p = 0;
  Scalar tau = 0;

  Scalar tangent_semiaxis() const {
    return std::isinf(tau) ? kInfinity : std::sqrt(tau * p + p * p);
  }
  Scalar normal_semiaxis() const { return p; }

  /// A/(tau*p + p^2) + B/p^2; the point is inside iff the value is < 1.
  Scalar quadratic_form(const Vector& x) const;

  Membership membership(const Vector& x, Scalar tol = 1e-9) const;
};

/// Euclidean projection of x onto the closed ellipsoid (x itself if inside).
Vector closest_point_in(const Ellipsoid& e, const Vector& x);

/// Euclidean projection of x onto the boundary of the ellipsoid.  Works from
/// both sides.  Where several boundary points are equally near (x on the
/// interior medial set of the ellipsoid), a deterministic representative is
/// returned.
Vector closest_boundary_point(const Ellipsoid& e, const Vector& x);

/// Upper bound for the distance from a point to a tau-reach manifold through
/// the tangent-cone comparison: sqrt(yT^2 + (yN + tau)^2) - tau, where yT and
/// yN are tangential/normal distances at a nearby base point.
Scalar cone_distance_bound(Scalar yT, Scalar yN, Scalar tau);

/// Reference manifolds with closed-form projection, distance and frames:
/// circle(R) in R^2, sphere(R) in R^3, torus(R, r) in R^3 (R > r), and an
/// m-dimensional coordinate subspace of R^n.
class AnalyticManifold {
 public:
  static AnalyticManifold circle(Scalar R);
  static AnalyticManifold sphere(Scalar R);
  static AnalyticManifold torus(Scalar R, Scalar r);
  static AnalyticManifold affine(int m, int n);

  int ambient_dim() const;
  int intrinsic_dim() const;

  /// Reach of the manifold; +infinity for the affine subspace.
  Scalar reach() const;

  /// Largest intrinsic circumference, used to size dense parameter grids;
  /// +infinity for the affine subspace.
  Scalar major_extent() const;

  /// Exact Euclidean distance from x to the manifold.
  Scalar distance(const Vector& x) const;

  /// Nearest-point projection.  Throws ErrorKind::MedialAxis where the
  /// nearest point is not unique.
  Vector project(const Vector& x) const;

  /// Tangent/normal frame at a point assumed to lie on the manifold.
  TangentFrame frame_at(const Vector& point) const;

  /// Deterministic dense point set on the manifold with roughly `resolution`
  /// points per intrinsic dimension.  Unsupported (unbounded) for the affine
  /// model.
  std::vector<Vector> parameter_grid(int resolution) const;

  std::string describe() const;

 private:
  enum class Kind { Circle, Sphere, Torus, Affine };
  Kind kind_;
  Scalar R_ = 0;
  Scalar r_ = 0;
  int m_ = 0;
  int n_ = 0;
};

}  // namespace ellcover
