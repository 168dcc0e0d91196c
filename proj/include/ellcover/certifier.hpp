#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "ellcover/geometry.hpp"

namespace ellcover {

/// Parameter region scanned by the certifier (reach normalized to 1).
/// Both share the box alpha in [0, arctan sqrt(M_p + M_p^2)], sigma in
/// [0, pi], p in [m_p, M_p], chi in [0, pi/2]; they differ in the coupling of
/// alpha and p:
///   C:      tan^2(alpha) <= p + p^2
///   CTilde: tan^2(alpha) <= 2p + p^2  (enlarged so that cubes centered at
///           lattice points of CTilde cover C)
enum class Region : std::uint8_t { C = 0, CTilde = 1 };

struct CertifierParams {
  Scalar m_p = 0.5;
  Scalar M_p = 0.96;
  Scalar kappa_off = 0.55;
  Scalar delta = 0.002;  ///< lattice half-step, must lie in (0, 0.01]
  Region region = Region::CTilde;

  /// 0 = one worker per hardware thread.
  unsigned workers = 0;

  /// Scan state is persisted here (and read back via resume_path).
  std::string checkpoint_path;
  std::string resume_path;
  std::uint64_t checkpoint_every = 100000000ull;  ///< evaluations between writes

  /// Test hook: stop (with a checkpoint) after this many tasks, 0 = never.
  std::uint64_t stop_after_tasks = 0;
};

/// A point of the scanned 4-parameter family.
struct Configuration {
  Scalar alpha = 0;
  Scalar sigma = 0;
  Scalar p = 0;
  Scalar chi = 0;
};

bool in_region(const Configuration& cfg, Region region, Scalar m_p = 0.5,
               Scalar M_p = 0.96);

/// The probe point X(p, chi) = (sqrt(p + p^2) cos chi, -p sin chi), a point
/// on the boundary of the base ellipsoid (tau = 1, thickening p, frame at the
/// origin with horizontal tangent).
Eigen::Vector2d point_X(Scalar p, Scalar chi);

/// Center of the second arc: C = (0, 1) + 2 (sin alpha, -cos alpha).
Eigen::Vector2d arc_center(Scalar alpha);

/// The sample point S(alpha, sigma) =
/// (2 sin alpha - sin(alpha - sigma), 1 - 2 cos alpha + cos(alpha - sigma)),
/// lying on the unit arc about arc_center(alpha).
Eigen::Vector2d point_S(Scalar alpha, Scalar sigma);

/// Margin of X inside the p-ellipsoid at S whose tangent is rotated by
/// (alpha - sigma):  v > 0 iff X lies strictly inside.  Two algebraically
/// equal routes are provided; `v` evaluates both, verifies they agree to
/// 1e-12 and checks the configuration against CTilde.
Scalar v_rotated(const Configuration& cfg);
Scalar v_expanded(const Configuration& cfg);
Scalar v(const Configuration& cfg);

/// Gradient 1-norm bound for v over CTilde; |v(a) - v(b)| <= L * |a - b|_inf.
Scalar lipschitz_L(Scalar m_p, Scalar M_p);

/// Effective sample-proximity radius sqrt(2p(sqrt(p + 2) - 1) - kappa_off)
/// (reach normalized to 1).  Throws if the radicand is not positive.
Scalar kappa_eff(Scalar p, Scalar kappa_off);

/// Nearest point Y to X(p, chi) on the two-arc curve (first arc: angle
/// t in [0, alpha] on the unit circle about (0, 1), from the origin to the
/// junction; second arc: angle s in [0, sigma] on the unit circle about
/// arc_center(alpha), from the junction to S).
struct TwoArcNearest {
  Eigen::Vector2d y;          ///< the nearest curve point
  Scalar distance = 0;        ///< |X - y|
  Scalar arc_distance = 0;    ///< curve length from y to S
  bool on_second_arc = false; ///< ties are resolved toward the second arc
};

TwoArcNearest two_arc_nearest(const Configuration& cfg);

/// Whether positivity of v must be certified at this configuration: the
/// nearest curve point Y must not lie strictly inside the base ellipsoid
/// (otherwise X is already covered by the sample at S'), and Y must be within
/// curve distance kappa_eff(p, kappa_off) of S.
bool mandatory(const Configuration& cfg, Scalar kappa_off = 0.55);

struct CertificateReport {
  Scalar delta = 0;
  Scalar L = 0;
  std::array<std::uint32_t, 4> lattice_dims{};  ///< alpha, sigma, p, chi
  std::uint64_t points_evaluated = 0;
  Scalar min_v = 0;
  Configuration argmin;
  std::array<std::uint32_t, 4> argmin_index{};  ///< alpha, sigma, p, chi
  bool certified = false;
  Scalar wall_time = 0;  ///< seconds; excluded from determinism comparisons
};

/// Scans the half-step-delta lattice over the enclosing box, evaluating v at
/// every center that lies in the configured region and is mandatory, and
/// reports the minimum.  certified := min_v > L * delta (then v > 0 on all of
/// C).  Deterministic: the result is bit-identical for any worker count.
CertificateReport grid_certify(const CertifierParams& params);

}  // namespace ellcover
