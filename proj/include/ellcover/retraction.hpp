#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ellcover/geometry.hpp"
#include "ellcover/nerve.hpp"

namespace ellcover {

/// Parameters of the numerical deformation retraction of an ellipsoid-union
/// neighborhood onto the manifold it covers.  Build through
/// make_retraction_config, which derives defaults and validates:
///   - w = (p - lambda)/2 > 0 (requires p > lambda),
///   - 0 < epsilon < min(w, margin ceiling) where the ceiling (in units of
///     the reach, with ph = p/tau, lh = lambda/tau) is
///     tau * (ph - 0.5*sqrt(ph*(3 ph^2 - lh^2 + 2 ph (2 + lh))/(1 + ph))).
struct RetractionConfig {
  EllipsoidCover cover;
  AnalyticManifold model = AnalyticManifold::circle(1.0);
  Scalar lambda = 0;      ///< coverage threshold of the sample density
  Scalar w = 0;           ///< offset where the flow hands over to pr
  Scalar epsilon = 0;     ///< shrunk-union containment margin
  Scalar set_grid_h = 0;  ///< resolution of the set-distance grid
  Scalar rk_step = 0;     ///< integrator step
};

/// Derives lambda (from the declared cover density), w, epsilon (0.9x its
/// ceiling), set_grid_h (p/50) and rk_step (1e-3 * tau) unless positive
/// overrides are given, then validates every invariant.
RetractionConfig make_retraction_config(EllipsoidCover cover,
                                        AnalyticManifold model,
                                        Scalar lambda_override = 0,
                                        Scalar epsilon_override = 0,
                                        Scalar set_grid_h_override = 0,
                                        Scalar rk_step_override = 0);

enum class CoverRegion : std::uint8_t { Outside, SingleCover, Overlap };

struct CoverMembership {
  CoverRegion region = CoverRegion::Outside;
  /// Sample index when region == SingleCover, otherwise unused.
  std::uint32_t owner = 0;
  /// Indices of every open ellipsoid containing the point, ascending.
  std::vector<std::uint32_t> containing;
};

/// Classifies a point by counting open-ellipsoid memberships (0 -> Outside,
/// 1 -> SingleCover, >= 2 -> Overlap).  Exact form evaluations, no grid.
CoverMembership set_membership(const EllipsoidCover& cover, const Vector& x);

/// Cached classification grid over the cover's bounding box plus exact
/// point-membership queries.  Distances to the single-cover and
/// outside-own-ellipsoid subsets of the union are measured against
/// classified grid points; the absolute error is at most 2h.
class CoverGrid {
 public:
  /// h <= 0 selects the default p/50.  Requires finite-reach ellipsoids.
  CoverGrid(const EllipsoidCover& cover, Scalar h = 0);

  const EllipsoidCover& cover() const { return cover_; }
  Scalar h() const { return h_; }
  int ambient_dim() const { return n_; }
  std::size_t grid_points() const { return owner_.size(); }

  /// Exact classification of an arbitrary point (bucket-accelerated).
  CoverMembership classify(const Vector& x) const;
  bool inside_union(const Vector& x) const;
  /// Membership in the closed union of (p - eps)-sublevel ellipsoids.
  bool inside_shrunk_union(const Vector& x, Scalar eps) const;

  /// True when no grid point is covered by sample s alone.
  bool single_region_empty(std::uint32_t s) const;

  /// Distance from x to the single-cover region of sample s; exact 0 when x
  /// itself classifies there, kInfinity when the region holds no grid point.
  Scalar dist_single(std::uint32_t s, const Vector& x) const;

  /// Distance from x to (union minus open ellipsoid s); exact 0 when x
  /// itself lies there, kInfinity when no grid point does.
  Scalar dist_outside_own(std::uint32_t s, const Vector& x) const;

  /// dist_outside_own with an early verdict: returns any value v with either
  /// v == exact distance, or v <= cap proving the exact distance is <= v.
  /// (The partition only needs the exact value above its support threshold.)
  Scalar dist_outside_own_capped(std::uint32_t s, const Vector& x,
                                 Scalar cap) const;

 private:
  void rasterize(std::uint32_t s);
  bool candidate_list(const Vector& x, std::vector<std::uint32_t>& out) const;
  Scalar ring_search(std::uint32_t s, const Vector& x, Scalar seed_best,
                     Scalar cap) const;

  EllipsoidCover cover_;
  Scalar h_ = 0;
  int n_ = 0;
  Scalar tangent_axis_ = 0;  ///< shared tangent semi-axis of the cover
  std::vector<Scalar> lo_, hi_;
  std::vector<std::int64_t> dims_, strides_;
  /// -1 outside the union, -2 covered by >= 2 ellipsoids, else the single
  /// covering sample.
  std::vector<std::int32_t> owner_;
  /// Grid points covered by exactly one ellipsoid, grouped by owner (CSR),
  /// plus each group's index-space bounding box for distance prefilters.
  std::vector<std::size_t> single_off_;
  std::vector<std::uint32_t> single_pts_;
  std::vector<std::int32_t> single_bbox_;  ///< per sample: lo[n], hi[n]
  /// Sample centers bucketed at the tangent-axis scale for candidate pruning.
  std::vector<Scalar> bucket_lo_;
  std::vector<std::int64_t> bucket_dims_, bucket_strides_;
  std::vector<std::vector<std::uint32_t>> buckets_;
};

/// d(Se, x) and d(De, x) for one sample: the distance to the part of the
/// union covered by that sample alone, and to the part outside the sample's
/// own ellipsoid.  kInfinity marks an empty set.
struct SetDistances {
  std::uint32_t sample = 0;
  Scalar d_single = 0;
  Scalar d_outside = 0;
};

/// Both set distances for every ellipsoid containing x (x must be in the
/// union).
std::vector<SetDistances> set_distances(const CoverGrid& grid,
                                        const Vector& x);

/// Smooth partition weights at a point of the union: one weight per
/// containing ellipsoid (many are exactly zero) plus the complementary
/// plateau weight f_p = 1 - sum.
struct PartitionWeights {
  std::vector<std::pair<std::uint32_t, Scalar>> f;
  Scalar f_p = 1;
};

PartitionWeights partition_of_unity(const CoverGrid& grid, const Vector& x);

/// Direction field of a single ellipsoid: the projection vector pr(x) - x,
/// with its outward-normal component (relative to the depth-level ellipsoid
/// boundary through x) removed whenever it points out of that ellipsoid.
Vector local_field(const Ellipsoid& e, const AnalyticManifold& model,
                   const Vector& x);

struct GluedField {
  Vector w_tilde;  ///< partition-weighted blend of pr(x)-x and local fields
  Vector v_field;  ///< w_tilde rescaled to unit decay rate of d(M, .)
};

GluedField glued_field(const CoverGrid& grid, const AnalyticManifold& model,
                       const Vector& x);

struct FlowSample {
  Scalar t = 0;
  Vector x;
  Scalar dist = 0;  ///< d(M, x)
  Vector field;     ///< v_field at x
};

struct FlowTrace {
  Vector start;
  std::vector<FlowSample> samples;
  Vector terminal;
};

/// Shared state of the retraction: validated config plus the classification
/// grid, built once.  Trajectory queries are const and independent.
class Retraction {
 public:
  explicit Retraction(RetractionConfig config);

  const RetractionConfig& config() const { return config_; }
  const CoverGrid& grid() const { return grid_; }
  /// Flow-law tolerance 10 * rk_step used by the trajectory checks.
  Scalar tol_flow() const { return 10 * config_.rk_step; }

  PartitionWeights partition(const Vector& x) const;
  GluedField field(const Vector& x) const;

  /// Integrates the unit-rate field for time t (classical RK4, step halving
  /// near the w-offset and wherever an intermediate stage would leave the
  /// union).  Requires x in the union, off the manifold, and
  /// t <= d(M, x) - w.  Throws ContainmentViolation if a step leaves the
  /// union (or the shrunk union when started inside it).
  FlowTrace flow_trace(const Vector& x, Scalar t) const;
  Vector flow(const Vector& x, Scalar t) const;

  /// Two-stage strong deformation retraction onto the manifold, t in [0, 1]:
  /// first the flow down to the w-offset (first half of t), then the
  /// straight-line normal retraction (second half).  retract_point(x, 0) = x,
  /// retract_point(x, 1) lies on the manifold, manifold points stay fixed.
  Vector retract_point(const Vector& x, Scalar t) const;

 private:
  RetractionConfig config_;
  CoverGrid grid_;
};

/// Grid maximum over q, l in (0, 1), chi in [0, pi/2] and both signs of
///   (1+q)^2 - q (1 +- cos chi)^2 + 1
///     - 2 (1-l) sqrt((1+q)/(cos^2 chi + q)) (q -+ cos chi),
/// the squared-distance expression whose bound < 4 certifies that the
/// projection vector never points along the outward ellipsoid normal.
/// grid_step must lie in (0, 0.01].
Scalar verify_halfline_inequality(Scalar grid_step);

struct AngleBoundResult {
  Scalar min_angle = 0;         ///< radians
  Scalar max_abs_residual = 0;  ///< worst |distance - 2| at the bisected root
  Scalar argmin_q = 0;
  Scalar argmin_chi = 0;
};

/// For each (q, chi) on the grid, the minimal rotation of the outward
/// ellipsoid normal that moves the associated reach-ball out of contact
/// (distance >= 2 from the far osculating center), minimized over both
/// rotation senses and the grid.  The minimum must stay above
/// arctan(sqrt 2) - 1e-3.  grid_step must lie in (0, 0.01].
AngleBoundResult verify_angle_bound_scan(Scalar grid_step);
Scalar verify_angle_bound(Scalar grid_step);

}  // namespace ellcover
