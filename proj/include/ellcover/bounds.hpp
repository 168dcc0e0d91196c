#pragma once

#include "ellcover/geometry.hpp"

namespace ellcover {

/// Window/offset constants of the density criterion.  The certified scan in
/// the `certifier` module was established for the defaults only; overriding
/// them is supported for experimentation.
struct BoundsConstants {
  Scalar m_p = 0.5;
  Scalar M_p = 0.96;
  Scalar kappa_off = 0.55;

  bool is_default() const {
    return m_p == 0.5 && M_p == 0.96 && kappa_off == 0.55;
  }
};

/// r(p) = sqrt(2p(sqrt(tau(p + 2 tau)) - tau)): how far a point of the
/// manifold can be from a sample while the sample's p-ellipsoid still covers
/// it.  Strictly increasing in p.
Scalar coverage_radius(Scalar p, Scalar tau);

/// Unique lambda >= 0 with coverage_radius(lambda, tau) = kappa, computed by
/// bisection on the strictly increasing coverage radius.  Thickening
/// parameters p > lambda make the ellipsoid union cover the manifold.
Scalar lambda(Scalar kappa, Scalar tau);

/// Density criterion at a specific thickening parameter:
/// kappa^2 < 2p(sqrt(tau(p + 2 tau)) - tau) - kappa_off * tau^2.
/// p must lie in the certified window [m_p tau, M_p tau].
bool density_check(Scalar kappa, Scalar tau, Scalar p,
                   const BoundsConstants& constants = {});

/// Largest kappa/tau for which the density criterion can hold (attained at
/// p = M_p tau): sqrt(2 M_p (sqrt(2 + M_p) - 1) - kappa_off).
Scalar max_density_ratio(const BoundsConstants& constants = {});

/// Whether the r-thickening of the manifold is contained in the ellipsoid
/// union: p > lambda(kappa, tau) + r.
bool thickening_covered(Scalar r, Scalar p, Scalar kappa, Scalar tau);

/// Summary of the admissible parameter window for a given sample density.
struct DensityReport {
  Scalar kappa = 0;
  Scalar tau = 0;
  Scalar lambda = 0;            ///< lower threshold for p
  Scalar p_window_lo = 0;       ///< max(lambda, m_p tau); window is open here
  Scalar p_window_hi = 0;       ///< M_p tau; window is closed here
  bool density_ok = false;      ///< criterion holds at p = M_p tau
  Scalar coverage_radius_at_Mp = 0;
  bool default_constants = true;
};

DensityReport density_report(Scalar kappa, Scalar tau,
                             const BoundsConstants& constants = {});

}  // namespace ellcover
