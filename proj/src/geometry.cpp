#include "ellcover/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ellcover {

namespace {

std::string dim_string(const Eigen::Ref<const Matrix>& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

Scalar TangentFrame::gram_deviation() const {
  const int n = ambient_dim();
  Matrix combined(n, tangent_dim() + normal_dim());
  combined << tangent_basis, normal_basis;
  Matrix gram = combined.transpose() * combined;
  gram -= Matrix::Identity(gram.rows(), gram.cols());
  return gram.cwiseAbs().maxCoeff();
}

void TangentFrame::require_valid(Scalar tol) const {
  if (origin.size() == 0) fail(ErrorKind::FrameInvalid, "frame has empty origin");
  if (tangent_basis.rows() != ambient_dim() || normal_basis.rows() != ambient_dim()) {
    fail(ErrorKind::FrameInvalid,
         "frame basis rows do not match ambient dimension: tangent " +
             dim_string(tangent_basis) + ", normal " + dim_string(normal_basis));
  }
  if (tangent_dim() + normal_dim() != ambient_dim()) {
    fail(ErrorKind::FrameInvalid,
         "tangent and normal bases do not span the ambient space: " +
             std::to_string(tangent_dim()) + " + " + std::to_string(normal_dim()) +
             " != " + std::to_string(ambient_dim()));
  }
  const Scalar dev = gram_deviation();
  if (!(dev <= tol)) {
    fail(ErrorKind::FrameInvalid,
         "frame deviates from orthonormality by " + std::to_string(dev));
  }
}

SplitComponents split_components(const TangentFrame& frame, const Vector& x) {
  if (x.size() != frame.origin.size()) {
    fail(ErrorKind::UndefinedInput, "point dimension does not match frame");
  }
  const Vector d = x - frame.origin;
  return SplitComponents{(frame.tangent_basis.transpose() * d).squaredNorm(),
                         (frame.normal_basis.transpose() * d).squaredNorm()};
}

Scalar depth_root(Scalar A, Scalar B, Scalar tau) {
  if (!(A >= 0) || !(B >= 0)) {
    fail(ErrorKind::UndefinedInput, "depth_root requires A >= 0 and B >= 0");
  }
  if (!(tau > 0) || std::isinf(tau)) {
    fail(ErrorKind::UndefinedInput, "depth_root requires finite tau > 0");
  }
  if (A == 0 && B == 0) {
    fail(ErrorKind::UndefinedInput, "depth_root is undefined for A = B = 0");
  }
  // Closed forms on the axes of the (A, B) quadrant.
  const Scalar root_b = std::sqrt(B);                                 // A = 0
  const Scalar root_a = (std::sqrt(tau * tau + 4 * A) - tau) / 2;     // B = 0
  if (A == 0) return root_b;
  if (B == 0) return root_a;

  // General case: positive root of f(q) = q^3 + tau q^2 - (A+B) q - tau B.
  // Both closed-form values lie strictly below the root (f < 0 there), and f
  // is increasing and convex on [max(root_a, root_b), root], so Newton from
  // that point converges monotonically.
  Scalar q = std::max(root_a, root_b);
  for (int it = 0; it < 128; ++it) {
    const Scalar f = ((q + tau) * q - (A + B)) * q - tau * B;
    const Scalar df = (3 * q + 2 * tau) * q - (A + B);
    const Scalar step = f / df;
    q -= step;
    if (std::abs(step) <= 1e-16 * q) break;
  }
  return q;
}

Scalar pep(const TangentFrame& frame, Scalar tau, const Vector& x) {
  const SplitComponents c = split_components(frame, x);
  if (std::isinf(tau)) return std::sqrt(c.normal_sq);
  return depth_root(c.tangent_sq, c.normal_sq, tau);
}

Scalar Ellipsoid::quadratic_form(const Vector& x) const {
  const SplitComponents c = split_components(frame, x);
  if (std::isinf(tau)) return c.normal_sq / (p * p);
  return c.tangent_sq / (tau * p + p * p) + c.normal_sq / (p * p);
}

Membership Ellipsoid::membership(const Vector& x, Scalar tol) const {
  const Scalar f = quadratic_form(x);
  if (f < 1 - tol) return Membership::Inside;
  if (f > 1 + tol) return Membership::Outside;
  return Membership::Boundary;
}

namespace {

struct FrameCoords {
  Vector yT;  // tangential coordinates of x - origin
  Vector yN;  // normal coordinates of x - origin
};

FrameCoords to_frame_coords(const TangentFrame& frame, const Vector& x) {
  const Vector d = x - frame.origin;
  return FrameCoords{frame.tangent_basis.transpose() * d,
                     frame.normal_basis.transpose() * d};
}

Vector from_frame_coords(const TangentFrame& frame, const Vector& yT, const Vector& yN) {
  return frame.origin + frame.tangent_basis * yT + frame.normal_basis * yN;
}

/// Solves a^2 A/(a^2+mu)^2 + b^2 B/(b^2+mu)^2 = 1 for mu > 0, valid when the
/// point (A, B are squared coordinate norms) lies outside the ellipsoid.  The
/// left side is decreasing and convex on mu >= 0 and exceeds 1 at mu = 0, so
/// Newton from 0 increases monotonically to the root.
Scalar exterior_multiplier(Scalar A, Scalar B, Scalar a2, Scalar b2) {
  Scalar mu = 0;
  for (int it = 0; it < 256; ++it) {
    const Scalar ta = a2 + mu, tb = b2 + mu;
    const Scalar h = a2 * A / (ta * ta) + b2 * B / (tb * tb) - 1;
    if (std::abs(h) <= 1e-15) break;
    const Scalar dh = -2 * (a2 * A / (ta * ta * ta) + b2 * B / (tb * tb * tb));
    const Scalar step = h / dh;
    mu -= step;
    if (std::abs(step) <= 1e-16 * std::max<Scalar>(1, mu)) break;
  }
  return mu;
}

/// Same secular equation restricted to mu in (-b2, 0), valid for a point
/// strictly inside with B > 0: the left side decreases from +infinity to a
/// value < 1, giving a unique root.  Bisection with a Newton polish.
Scalar interior_multiplier(Scalar A, Scalar B, Scalar a2, Scalar b2) {
  auto value = [&](Scalar mu) {
    const Scalar ta = a2 + mu, tb = b2 + mu;
    return a2 * A / (ta * ta) + b2 * B / (tb * tb) - 1;
  };
  Scalar lo = -b2, hi = 0;
  // Walk lo away from the pole until the value is positive (it is +infinity
  // in the limit, but floating point needs a representable bracket).
  Scalar shift = b2 * 1e-12;
  while (value(lo + shift) <= 0 && shift < b2) shift *= 4;
  lo += shift;
  if (value(lo) <= 0) return 0;  // B vanishingly small: caller handles axis case
  for (int it = 0; it < 200; ++it) {
    const Scalar mid = (lo + hi) / 2;
    if (mid == lo || mid == hi) break;
    (value(mid) > 0 ? lo : hi) = mid;
  }
  Scalar mu = (lo + hi) / 2;
  for (int it = 0; it < 8; ++it) {
    const Scalar ta = a2 + mu, tb = b2 + mu;
    const Scalar h = a2 * A / (ta * ta) + b2 * B / (tb * tb) - 1;
    const Scalar dh = -2 * (a2 * A / (ta * ta * ta) + b2 * B / (tb * tb * tb));
    const Scalar next = mu - h / dh;
    if (next <= -b2 || next >= 0) break;
    mu = next;
  }
  return mu;
}

void require_projectable(const Ellipsoid& e) {
  if (!(e.p > 0)) fail(ErrorKind::UndefinedInput, "ellipsoid requires p > 0");
  if (!(e.tau > 0)) fail(ErrorKind::UndefinedInput, "ellipsoid requires tau > 0");
}

}  // namespace

Vector closest_point_in(const Ellipsoid& e, const Vector& x) {
  require_projectable(e);
  if (std::isinf(e.tau)) {
    FrameCoords c = to_frame_coords(e.frame, x);
    const Scalar nn = c.yN.norm();
    if (nn <= e.p) return x;
    return from_frame_coords(e.frame, c.yT, c.yN * (e.p / nn));
  }
  if (e.quadratic_form(x) <= 1) return x;
  const FrameCoords c = to_frame_coords(e.frame, x);
  const Scalar a2 = e.tau * e.p + e.p * e.p, b2 = e.p * e.p;
  const Scalar mu = exterior_multiplier(c.yT.squaredNorm(), c.yN.squaredNorm(), a2, b2);
  return from_frame_coords(e.frame, c.yT * (a2 / (a2 + mu)), c.yN * (b2 / (b2 + mu)));
}

Vector closest_boundary_point(const Ellipsoid& e, const Vector& x) {
  require_projectable(e);
  const FrameCoords c = to_frame_coords(e.frame, x);
  if (std::isinf(e.tau)) {
    const Scalar nn = c.yN.norm();
    if (nn > 0) return from_frame_coords(e.frame, c.yT, c.yN * (e.p / nn));
    // On the mid-plane every normal direction is equally near: pick the first.
    Vector yN = Vector::Zero(e.frame.normal_dim());
    yN[0] = e.p;
    return from_frame_coords(e.frame, c.yT, yN);
  }
  const Scalar a2 = e.tau * e.p + e.p * e.p, b2 = e.p * e.p;
  const Scalar A = c.yT.squaredNorm(), B = c.yN.squaredNorm();
  const Scalar form = A / a2 + B / b2;
  if (form > 1) {
    const Scalar mu = exterior_multiplier(A, B, a2, b2);
    return from_frame_coords(e.frame, c.yT * (a2 / (a2 + mu)), c.yN * (b2 / (b2 + mu)));
  }
  if (form == 1) return x;

  // Interior point.  With a normal component the nearest boundary point is the
  // radial secular solution with multiplier in (-b^2, 0).
  if (B > 0) {
    const Scalar mu = interior_multiplier(A, B, a2, b2);
    if (mu < 0) {
      return from_frame_coords(e.frame, c.yT * (a2 / (a2 + mu)),
                               c.yN * (b2 / (b2 + mu)));
    }
  }
  // Interior point on (or numerically indistinguishable from) the tangent
  // plane.  Candidates: the in-plane radial boundary point, and the detached
  // solution that leaves the plane along a normal direction (exists while the
  // scaled tangent coordinate stays inside the boundary).  The normal
  // direction of the detached solution is not unique; pick the first basis
  // vector and keep any existing normal component's direction if present.
  Vector best_T;
  Vector best_N = Vector::Zero(e.frame.normal_dim());
  Scalar best_d2 = kInfinity;
  if (A > 0) {
    const Scalar sA = std::sqrt(A);
    best_T = c.yT * (std::sqrt(a2) / sA);
    best_d2 = (std::sqrt(a2) - sA) * (std::sqrt(a2) - sA);
  } else {
    // Exact center: inradius along the first normal direction.
    best_T = Vector::Zero(e.frame.tangent_dim());
    best_N[0] = e.p;
    return from_frame_coords(e.frame, best_T, best_N);
  }
  const Scalar scale = a2 / (a2 - b2);
  const Scalar zT2 = A * scale * scale;
  if (zT2 / a2 < 1) {
    const Scalar zN = std::sqrt(b2 * (1 - zT2 / a2));
    Vector candN = Vector::Zero(e.frame.normal_dim());
    candN[0] = zN;
    const Scalar dT = std::sqrt(A) * (scale - 1);
    const Scalar d2 = dT * dT + zN * zN;
    if (d2 < best_d2) {
      best_d2 = d2;
      best_T = c.yT * scale;
      best_N = candN;
    }
  }
  return from_frame_coords(e.frame, best_T, best_N);
}

Scalar cone_distance_bound(Scalar yT, Scalar yN, Scalar tau) {
  if (!(yT >= 0) || !(yN >= 0) || !(tau > 0)) {
    fail(ErrorKind::UndefinedInput,
         "cone_distance_bound requires yT, yN >= 0 and tau > 0");
  }
  if (std::isinf(tau)) return yN;
  return std::sqrt(yT * yT + (yN + tau) * (yN + tau)) - tau;
}

// ---------------------------------------------------------------------------
// Analytic reference manifolds
// ---------------------------------------------------------------------------

AnalyticManifold AnalyticManifold::circle(Scalar R) {
  if (!(R > 0)) fail(ErrorKind::UndefinedInput, "circle requires R > 0");
  AnalyticManifold m;
  m.kind_ = Kind::Circle;
  m.R_ = R;
  return m;
}

AnalyticManifold AnalyticManifold::sphere(Scalar R) {
  if (!(R > 0)) fail(ErrorKind::UndefinedInput, "sphere requires R > 0");
  AnalyticManifold m;
  m.kind_ = Kind::Sphere;
  m.R_ = R;
  return m;
}

AnalyticManifold AnalyticManifold::torus(Scalar R, Scalar r) {
  if (!(r > 0) || !(R > r)) {
    fail(ErrorKind::UndefinedInput, "torus requires R > r > 0");
  }
  AnalyticManifold m;
  m.kind_ = Kind::Torus;
  m.R_ = R;
  m.r_ = r;
  return m;
}

AnalyticManifold AnalyticManifold::affine(int m, int n) {
  if (m < 1 || n < 2 || m >= n) {
    fail(ErrorKind::UndefinedInput,
         "affine subspace requires 1 <= m < n with n >= 2");
  }
  AnalyticManifold a;
  a.kind_ = Kind::Affine;
  a.m_ = m;
  a.n_ = n;
  return a;
}

int AnalyticManifold::ambient_dim() const {
  switch (kind_) {
    case Kind::Circle: return 2;
    case Kind::Sphere: return 3;
    case Kind::Torus: return 3;
    case Kind::Affine: return n_;
  }
  return 0;
}

int AnalyticManifold::intrinsic_dim() const {
  switch (kind_) {
    case Kind::Circle: return 1;
    case Kind::Sphere: return 2;
    case Kind::Torus: return 2;
    case Kind::Affine: return m_;
  }
  return 0;
}

Scalar AnalyticManifold::reach() const {
  switch (kind_) {
    case Kind::Circle: return R_;
    case Kind::Sphere: return R_;
    case Kind::Torus: return std::min(r_, R_ - r_);
    case Kind::Affine: return kInfinity;
  }
  return 0;
}

Scalar AnalyticManifold::major_extent() const {
  constexpr Scalar two_pi = 6.28318530717958647692;
  switch (kind_) {
    case Kind::Circle: return two_pi * R_;
    case Kind::Sphere: return two_pi * R_;
    case Kind::Torus: return two_pi * (R_ + r_);
    case Kind::Affine: return kInfinity;
  }
  return 0;
}

Scalar AnalyticManifold::distance(const Vector& x) const {
  if (x.size() != ambient_dim()) {
    fail(ErrorKind::UndefinedInput, "point dimension does not match manifold");
  }
  switch (kind_) {
    case Kind::Circle:
    case Kind::Sphere:
      return std::abs(x.norm() - R_);
    case Kind::Torus: {
      const Scalar rho = std::hypot(x[0], x[1]);
      return std::abs(std::hypot(rho - R_, x[2]) - r_);
    }
    case Kind::Affine:
      return x.tail(n_ - m_).norm();
  }
  return 0;
}

Vector AnalyticManifold::project(const Vector& x) const {
  if (x.size() != ambient_dim()) {
    fail(ErrorKind::UndefinedInput, "point dimension does not match manifold");
  }
  constexpr Scalar kMedialTol = 1e-9;
  switch (kind_) {
    case Kind::Circle:
    case Kind::Sphere: {
      const Scalar n = x.norm();
      if (n < kMedialTol) {
        fail(ErrorKind::MedialAxis, "projection undefined at the center");
      }
      return x * (R_ / n);
    }
    case Kind::Torus: {
      const Scalar rho = std::hypot(x[0], x[1]);
      if (rho < kMedialTol) {
        fail(ErrorKind::MedialAxis, "projection undefined on the torus axis");
      }
      Vector core(3);
      core << x[0] * (R_ / rho), x[1] * (R_ / rho), 0;
      const Vector w = x - core;
      const Scalar wn = w.norm();
      if (wn < kMedialTol) {
        fail(ErrorKind::MedialAxis, "projection undefined on the core circle");
      }
      return core + w * (r_ / wn);
    }
    case Kind::Affine: {
      Vector y = x;
      y.tail(n_ - m_).setZero();
      return y;
    }
  }
  return x;
}

TangentFrame AnalyticManifold::frame_at(const Vector& point) const {
  if (point.size() != ambient_dim()) {
    fail(ErrorKind::UndefinedInput, "point dimension does not match manifold");
  }
  TangentFrame f;
  f.origin = point;
  switch (kind_) {
    case Kind::Circle: {
      const Scalar n = point.norm();
      if (n < 1e-9) fail(ErrorKind::UndefinedInput, "frame undefined at the center");
      f.tangent_basis = Matrix(2, 1);
      f.tangent_basis << -point[1] / n, point[0] / n;
      f.normal_basis = Matrix(2, 1);
      f.normal_basis << point[0] / n, point[1] / n;
      break;
    }
    case Kind::Sphere: {
      const Scalar n = point.norm();
      if (n < 1e-9) fail(ErrorKind::UndefinedInput, "frame undefined at the center");
      const Vector nu = point / n;
      // Deterministic tangent pair: orthogonalize the canonical axis least
      // aligned with the normal, complete with the cross product.
      int k = 0;
      for (int i = 1; i < 3; ++i) {
        if (std::abs(nu[i]) < std::abs(nu[k])) k = i;
      }
      Vector t1 = Vector::Zero(3);
      t1[k] = 1;
      t1 -= nu * nu[k];
      t1.normalize();
      Eigen::Vector3d t2 = Eigen::Vector3d(nu).cross(Eigen::Vector3d(t1));
      f.tangent_basis = Matrix(3, 2);
      f.tangent_basis.col(0) = t1;
      f.tangent_basis.col(1) = t2;
      f.normal_basis = nu;
      break;
    }
    case Kind::Torus: {
      const Scalar rho = std::hypot(point[0], point[1]);
      if (rho < 1e-9) fail(ErrorKind::UndefinedInput, "frame undefined on the axis");
      const Scalar cu = point[0] / rho, su = point[1] / rho;
      Vector core(3);
      core << R_ * cu, R_ * su, 0;
      Vector w = point - core;
      const Scalar wn = w.norm();
      if (wn < 1e-9) fail(ErrorKind::UndefinedInput, "frame undefined on the core circle");
      w /= wn;
      const Scalar sv = w[2];
      const Scalar cv = w[0] * cu + w[1] * su;
      f.tangent_basis = Matrix(3, 2);
      f.tangent_basis << -su, -sv * cu, cu, -sv * su, 0, cv;
      f.normal_basis = Matrix(3, 1);
      f.normal_basis << cv * cu, cv * su, sv;
      break;
    }
    case Kind::Affine: {
      f.tangent_basis = Matrix::Zero(n_, m_);
      f.normal_basis = Matrix::Zero(n_, n_ - m_);
      for (int i = 0; i < m_; ++i) f.tangent_basis(i, i) = 1;
      for (int i = 0; i < n_ - m_; ++i) f.normal_basis(m_ + i, i) = 1;
      break;
    }
  }
  return f;
}

std::vector<Vector> AnalyticManifold::parameter_grid(int resolution) const {
  if (resolution < 1) {
    fail(ErrorKind::UndefinedInput, "parameter grid needs a positive resolution");
  }
  std::vector<Vector> pts;
  switch (kind_) {
    case Kind::Circle: {
      pts.reserve(resolution);
      for (int i = 0; i < resolution; ++i) {
        const Scalar t = 2 * std::numbers::pi * i / resolution;
        Vector v(2);
        v << R_ * std::cos(t), R_ * std::sin(t);
        pts.push_back(std::move(v));
      }
      break;
    }
    case Kind::Sphere: {
      // Fibonacci lattice: near-uniform area distribution.
      const long long M = static_cast<long long>(resolution) * resolution;
      const Scalar golden = std::numbers::pi * (3 - std::sqrt(Scalar(5)));
      pts.reserve(M);
      for (long long i = 0; i < M; ++i) {
        const Scalar z = 1 - 2 * (i + Scalar(0.5)) / M;
        const Scalar rho = std::sqrt(std::max<Scalar>(0, 1 - z * z));
        const Scalar phi = golden * i;
        Vector v(3);
        v << R_ * rho * std::cos(phi), R_ * rho * std::sin(phi), R_ * z;
        pts.push_back(std::move(v));
      }
      break;
    }
    case Kind::Torus: {
      pts.reserve(static_cast<size_t>(resolution) * resolution);
      for (int i = 0; i < resolution; ++i) {
        const Scalar u = 2 * std::numbers::pi * i / resolution;
        const Scalar cu = std::cos(u), su = std::sin(u);
        for (int j = 0; j < resolution; ++j) {
          const Scalar v = 2 * std::numbers::pi * j / resolution;
          const Scalar cv = std::cos(v), sv = std::sin(v);
          Vector w(3);
          w << (R_ + r_ * cv) * cu, (R_ + r_ * cv) * su, r_ * sv;
          pts.push_back(std::move(w));
        }
      }
      break;
    }
    case Kind::Affine:
      fail(ErrorKind::DomainViolation,
           "an affine subspace is unbounded and has no finite sample grid");
  }
  return pts;
}

std::string AnalyticManifold::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::Circle: os << "circle:" << R_; break;
    case Kind::Sphere: os << "sphere:" << R_; break;
    case Kind::Torus: os << "torus:" << R_ << ":" << r_; break;
    case Kind::Affine: os << "affine:" << m_ << ":" << n_; break;
  }
  return os.str();
}

}  // namespace ellcover
