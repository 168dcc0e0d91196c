#include "ellcover/bounds.hpp"

#include <algorithm>
#include <cmath>

namespace ellcover {

namespace {

void require_reach(Scalar tau) {
  if (!(tau > 0) || std::isinf(tau)) {
    fail(ErrorKind::UndefinedInput, "reach must be finite and positive");
  }
}

void require_constants(const BoundsConstants& c) {
  if (!(c.m_p > 0) || !(c.M_p > c.m_p) || !(c.kappa_off >= 0)) {
    fail(ErrorKind::UndefinedInput,
         "density constants need 0 < m_p < M_p and kappa_off >= 0");
  }
}

}  // namespace

Scalar coverage_radius(Scalar p, Scalar tau) {
  require_reach(tau);
  if (!(p >= 0)) fail(ErrorKind::UndefinedInput, "coverage_radius requires p >= 0");
  return std::sqrt(2 * p * (std::sqrt(tau * (p + 2 * tau)) - tau));
}

Scalar lambda(Scalar kappa, Scalar tau) {
  require_reach(tau);
  if (!(kappa >= 0)) fail(ErrorKind::UndefinedInput, "lambda requires kappa >= 0");
  if (kappa == 0) return 0;
  // coverage_radius(., tau) is strictly increasing and unbounded; expand the
  // bracket geometrically (kappa + tau alone is too small once kappa is a few
  // times tau), then bisect.
  Scalar lo = 0, hi = kappa + tau;
  while (coverage_radius(hi, tau) < kappa) hi *= 2;
  const Scalar tol = 1e-12 * tau;
  while (hi - lo > tol) {
    const Scalar mid = (lo + hi) / 2;
    if (mid == lo || mid == hi) break;
    (coverage_radius(mid, tau) < kappa ? lo : hi) = mid;
  }
  return (lo + hi) / 2;
}

bool density_check(Scalar kappa, Scalar tau, Scalar p,
                   const BoundsConstants& constants) {
  require_reach(tau);
  require_constants(constants);
  if (!(kappa >= 0)) fail(ErrorKind::UndefinedInput, "density_check requires kappa >= 0");
  if (!(p >= constants.m_p * tau) || !(p <= constants.M_p * tau)) {
    fail(ErrorKind::WindowViolation,
         "density criterion is certified only for p in [" +
             std::to_string(constants.m_p) + " tau, " +
             std::to_string(constants.M_p) + " tau]");
  }
  const Scalar rhs =
      2 * p * (std::sqrt(tau * (p + 2 * tau)) - tau) - constants.kappa_off * tau * tau;
  return kappa * kappa < rhs;
}

Scalar max_density_ratio(const BoundsConstants& constants) {
  require_constants(constants);
  const Scalar inner = 2 * constants.M_p * (std::sqrt(2 + constants.M_p) - 1) -
                       constants.kappa_off;
  if (!(inner > 0)) {
    fail(ErrorKind::UndefinedInput, "density constants admit no valid density");
  }
  return std::sqrt(inner);
}

bool thickening_covered(Scalar r, Scalar p, Scalar kappa, Scalar tau) {
  if (!(r >= 0)) fail(ErrorKind::UndefinedInput, "thickening radius must be >= 0");
  return p > lambda(kappa, tau) + r;
}

DensityReport density_report(Scalar kappa, Scalar tau,
                             const BoundsConstants& constants) {
  require_reach(tau);
  require_constants(constants);
  DensityReport rep;
  rep.kappa = kappa;
  rep.tau = tau;
  rep.lambda = lambda(kappa, tau);
  rep.p_window_lo = std::max(rep.lambda, constants.m_p * tau);
  rep.p_window_hi = constants.M_p * tau;
  rep.density_ok = density_check(kappa, tau, constants.M_p * tau, constants);
  rep.coverage_radius_at_Mp = coverage_radius(constants.M_p * tau, tau);
  rep.default_constants = constants.is_default();
  return rep;
}

}  // namespace ellcover
