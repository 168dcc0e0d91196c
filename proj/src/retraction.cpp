#include "ellcover/retraction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "ellcover/bounds.hpp"
#include "ellcover/errors.hpp"

namespace ellcover {
namespace {

constexpr Scalar kPi = 3.14159265358979323846;

/// Smooth cutoff: exp(-1/t) for t > 0, identically 0 otherwise.
Scalar psi(Scalar t) { return t > 0 ? std::exp(-1.0 / t) : 0.0; }

/// Margin ceiling for epsilon, in ambient units.  Derived for the
/// reach-normalized problem (ph = p/tau, lh = lambda/tau) and scaled back.
Scalar epsilon_ceiling(Scalar p, Scalar lambda, Scalar tau) {
  const Scalar ph = p / tau;
  const Scalar lh = lambda / tau;
  const Scalar inner =
      ph * (3 * ph * ph - lh * lh + 2 * ph * (2 + lh)) / (1 + ph);
  if (inner <= 0) return 0;
  return tau * (ph - 0.5 * std::sqrt(inner));
}

/// Iterates f over every integer tuple in [r0, r1] (inclusive, per dim).
template <typename F>
void for_each_box(const std::vector<std::int64_t>& r0,
                  const std::vector<std::int64_t>& r1, F&& f) {
  const int n = static_cast<int>(r0.size());
  for (int d = 0; d < n; ++d)
    if (r0[d] > r1[d]) return;
  std::vector<std::int64_t> c(r0);
  while (true) {
    f(c);
    int d = n - 1;
    while (d >= 0 && ++c[d] > r1[d]) c[d] = r0[d], --d;
    if (d < 0) return;
  }
}

}  // namespace

RetractionConfig make_retraction_config(EllipsoidCover cover,
                                        AnalyticManifold model,
                                        Scalar lambda_override,
                                        Scalar epsilon_override,
                                        Scalar set_grid_h_override,
                                        Scalar rk_step_override) {
  if (cover.size() == 0)
    fail(ErrorKind::UndefinedInput, "retraction needs a nonempty cover");
  if (cover.samples.front().origin.size() != model.ambient_dim())
    fail(ErrorKind::UndefinedInput,
         "cover and model live in different ambient dimensions");
  if (!std::isfinite(cover.tau))
    fail(ErrorKind::DomainViolation,
         "retraction requires a finite-reach model");
  if (std::abs(cover.tau - model.reach()) > 1e-9 * std::max<Scalar>(1, cover.tau))
    fail(ErrorKind::DomainViolation,
         "cover tau disagrees with the model reach");

  RetractionConfig cfg;
  cfg.cover = std::move(cover);
  cfg.model = std::move(model);
  const Scalar p = cfg.cover.p;
  const Scalar tau = cfg.cover.tau;

  cfg.lambda = lambda_override > 0 ? lambda_override
                                   : lambda(cfg.cover.kappa, tau);
  if (!(cfg.lambda > 0) || !(cfg.lambda < p))
    fail(ErrorKind::InfeasibleParameters,
         "retraction needs lambda in (0, p): the sample is too sparse for "
         "this ellipsoid size");
  cfg.w = 0.5 * (p - cfg.lambda);

  const Scalar ceiling = epsilon_ceiling(p, cfg.lambda, tau);
  const Scalar cap = std::min(cfg.w, ceiling);
  cfg.epsilon = epsilon_override > 0 ? epsilon_override : 0.9 * cap;
  if (!(cfg.epsilon > 0) || !(cfg.epsilon < cap))
    fail(ErrorKind::InfeasibleParameters,
         "epsilon must lie strictly between 0 and min(w, margin ceiling)");

  cfg.set_grid_h = set_grid_h_override > 0 ? set_grid_h_override : p / 50;
  cfg.rk_step = rk_step_override > 0 ? rk_step_override : 1e-3 * tau;
  if (!(cfg.set_grid_h > 0) || !(cfg.rk_step > 0))
    fail(ErrorKind::InfeasibleParameters,
         "grid resolution and integrator step must be positive");
  return cfg;
}

CoverMembership set_membership(const EllipsoidCover& cover, const Vector& x) {
  CoverMembership m;
  for (std::uint32_t s = 0; s < cover.size(); ++s)
    if (cover.ellipsoid(s).quadratic_form(x) < 1.0) m.containing.push_back(s);
  if (m.containing.size() == 1) {
    m.region = CoverRegion::SingleCover;
    m.owner = m.containing.front();
  } else if (!m.containing.empty()) {
    m.region = CoverRegion::Overlap;
  }
  return m;
}

// ---------------------------------------------------------------------------
// CoverGrid

CoverGrid::CoverGrid(const EllipsoidCover& cover, Scalar h)
    : cover_(cover) {
  if (cover_.size() == 0)
    fail(ErrorKind::UndefinedInput, "cannot grid an empty cover");
  n_ = static_cast<int>(cover_.samples.front().origin.size());
  if (n_ < 2)
    fail(ErrorKind::DomainViolation, "set grids need ambient dimension >= 2");
  tangent_axis_ = cover_.ellipsoid(0).tangent_semiaxis();
  if (!std::isfinite(tangent_axis_))
    fail(ErrorKind::DomainViolation,
         "set grids need bounded ellipsoids (finite reach)");
  h_ = h > 0 ? h : cover_.p / 50;

  // Bounding box of the union, padded by one cell.
  lo_.assign(n_, std::numeric_limits<Scalar>::infinity());
  hi_.assign(n_, -std::numeric_limits<Scalar>::infinity());
  const Scalar ext = tangent_axis_;  // largest semi-axis
  for (const TangentFrame& f : cover_.samples)
    for (int r = 0; r < n_; ++r) {
      lo_[r] = std::min(lo_[r], f.origin[r] - ext);
      hi_[r] = std::max(hi_[r], f.origin[r] + ext);
    }
  dims_.assign(n_, 0);
  std::int64_t total = 1;
  for (int r = 0; r < n_; ++r) {
    lo_[r] -= h_;
    hi_[r] += h_;
    dims_[r] = static_cast<std::int64_t>(std::ceil((hi_[r] - lo_[r]) / h_)) + 1;
    dims_[r] = std::max<std::int64_t>(dims_[r], 2);
    total *= dims_[r];
    if (total > (std::int64_t{1} << 31))
      fail(ErrorKind::ResolutionLimit,
           "set-distance grid exceeds 2^31 points; increase the grid "
           "resolution parameter");
  }
  strides_.assign(n_, 1);
  for (int r = n_ - 2; r >= 0; --r) strides_[r] = strides_[r + 1] * dims_[r + 1];
  owner_.assign(static_cast<std::size_t>(total), -1);

  for (std::uint32_t s = 0; s < cover_.size(); ++s) rasterize(s);

  // Single-cover points grouped by owner, with per-owner index bboxes.
  const std::uint32_t ns = cover_.size();
  single_off_.assign(ns + 1, 0);
  single_bbox_.assign(static_cast<std::size_t>(ns) * 2 * n_, 0);
  for (std::uint32_t s = 0; s < ns; ++s)
    for (int r = 0; r < n_; ++r) {
      single_bbox_[(2 * s) * n_ + r] = std::numeric_limits<std::int32_t>::max();
      single_bbox_[(2 * s + 1) * n_ + r] = -1;
    }
  for (std::size_t i = 0; i < owner_.size(); ++i)
    if (owner_[i] >= 0) ++single_off_[static_cast<std::size_t>(owner_[i]) + 1];
  for (std::uint32_t s = 0; s < ns; ++s) single_off_[s + 1] += single_off_[s];
  single_pts_.resize(single_off_[ns]);
  std::vector<std::size_t> cursor(single_off_.begin(), single_off_.end() - 1);
  for (std::size_t i = 0; i < owner_.size(); ++i) {
    const std::int32_t o = owner_[i];
    if (o < 0) continue;
    single_pts_[cursor[static_cast<std::size_t>(o)]++] =
        static_cast<std::uint32_t>(i);
    std::size_t rest = i;
    for (int r = 0; r < n_; ++r) {
      const auto c = static_cast<std::int32_t>(rest / strides_[r]);
      rest %= static_cast<std::size_t>(strides_[r]);
      auto& blo = single_bbox_[(2 * static_cast<std::size_t>(o)) * n_ + r];
      auto& bhi = single_bbox_[(2 * static_cast<std::size_t>(o) + 1) * n_ + r];
      blo = std::min(blo, c);
      bhi = std::max(bhi, c);
    }
  }

  // Center buckets at the tangent-axis scale for membership pruning.
  bucket_lo_.assign(n_, 0);
  bucket_dims_.assign(n_, 0);
  std::int64_t btotal = 1;
  for (int r = 0; r < n_; ++r) {
    bucket_lo_[r] = lo_[r];
    bucket_dims_[r] = static_cast<std::int64_t>(
                          std::floor((hi_[r] - lo_[r]) / tangent_axis_)) +
                      1;
    btotal *= bucket_dims_[r];
  }
  bucket_strides_.assign(n_, 1);
  for (int r = n_ - 2; r >= 0; --r)
    bucket_strides_[r] = bucket_strides_[r + 1] * bucket_dims_[r + 1];
  buckets_.assign(static_cast<std::size_t>(btotal), {});
  for (std::uint32_t s = 0; s < ns; ++s) {
    std::int64_t idx = 0;
    for (int r = 0; r < n_; ++r) {
      auto c = static_cast<std::int64_t>(
          std::floor((cover_.samples[s].origin[r] - bucket_lo_[r]) /
                     tangent_axis_));
      c = std::clamp<std::int64_t>(c, 0, bucket_dims_[r] - 1);
      idx += c * bucket_strides_[r];
    }
    buckets_[static_cast<std::size_t>(idx)].push_back(s);
  }
}

void CoverGrid::rasterize(std::uint32_t s) {
  const Ellipsoid e = cover_.ellipsoid(s);
  const TangentFrame& f = e.frame;
  const int m = static_cast<int>(f.tangent_basis.cols());
  const Scalar inv_a2 = 1.0 / (e.tangent_semiaxis() * e.tangent_semiaxis());
  const Scalar inv_b2 = 1.0 / (e.normal_semiaxis() * e.normal_semiaxis());

  // Weighted orthonormal rows of the quadratic form.
  std::vector<Vector> rows;
  std::vector<Scalar> wgt;
  for (int j = 0; j < m; ++j) {
    rows.push_back(f.tangent_basis.col(j));
    wgt.push_back(inv_a2);
  }
  for (int j = 0; j < f.normal_basis.cols(); ++j) {
    rows.push_back(f.normal_basis.col(j));
    wgt.push_back(inv_b2);
  }

  // Per-dimension extent of the ellipsoid and its index range.
  std::vector<std::int64_t> r0(n_), r1(n_);
  for (int r = 0; r < n_; ++r) {
    Scalar ext2 = 0;
    for (std::size_t j = 0; j < rows.size(); ++j)
      ext2 += rows[j][r] * rows[j][r] / wgt[j];
    const Scalar ext = std::sqrt(ext2);
    r0[r] = std::max<std::int64_t>(
        0, static_cast<std::int64_t>(
               std::ceil((f.origin[r] - ext - lo_[r]) / h_ - 1e-12)));
    r1[r] = std::min<std::int64_t>(
        dims_[r] - 1, static_cast<std::int64_t>(std::floor(
                          (f.origin[r] + ext - lo_[r]) / h_ + 1e-12)));
    if (r0[r] > r1[r]) return;
  }

  const int zd = n_ - 1;
  const std::int64_t zlo = r0[zd], zhi = r1[zd];
  std::vector<std::int64_t> c0(r0.begin(), r0.end() - 1),
      c1(r1.begin(), r1.end() - 1);
  // Quadratic coefficients of the form along the grid column in the last
  // axis: form(k) = sum_j wgt_j (u_j + g_j k)^2, k the z index.
  std::vector<Scalar> g(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) g[j] = rows[j][zd] * h_;
  Vector base(n_);
  for_each_box(c0, c1, [&](const std::vector<std::int64_t>& col) {
    for (int r = 0; r < zd; ++r) base[r] = lo_[r] + col[r] * h_ - f.origin[r];
    base[zd] = lo_[zd] - f.origin[zd];
    Scalar A = 0, B = 0, C = -1;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const Scalar u = rows[j].dot(base);
      A += wgt[j] * g[j] * g[j];
      B += 2 * wgt[j] * u * g[j];
      C += wgt[j] * u * u;
    }
    const Scalar disc = B * B - 4 * A * C;
    if (disc <= 0) return;
    const Scalar sq = std::sqrt(disc);
    const Scalar klo = (-B - sq) / (2 * A), khi = (-B + sq) / (2 * A);
    // Strict interior: exclude indices exactly on the boundary.
    std::int64_t kb = static_cast<std::int64_t>(std::floor(klo)) + 1;
    std::int64_t ke = static_cast<std::int64_t>(std::ceil(khi)) - 1;
    kb = std::max(kb, zlo);
    ke = std::min(ke, zhi);
    if (kb > ke) return;
    std::size_t flat = 0;
    for (int r = 0; r < zd; ++r)
      flat += static_cast<std::size_t>(col[r] * strides_[r]);
    for (std::int64_t k = kb; k <= ke; ++k) {
      std::int32_t& o = owner_[flat + static_cast<std::size_t>(k)];
      o = (o == -1) ? static_cast<std::int32_t>(s) : -2;
    }
  });
}

bool CoverGrid::candidate_list(const Vector& x,
                               std::vector<std::uint32_t>& out) const {
  out.clear();
  std::vector<std::int64_t> b0(n_), b1(n_);
  for (int r = 0; r < n_; ++r) {
    const auto c = static_cast<std::int64_t>(
        std::floor((x[r] - bucket_lo_[r]) / tangent_axis_));
    if (c < -1 || c > bucket_dims_[r]) return false;  // beyond any reach
    b0[r] = std::max<std::int64_t>(0, c - 1);
    b1[r] = std::min<std::int64_t>(bucket_dims_[r] - 1, c + 1);
  }
  for_each_box(b0, b1, [&](const std::vector<std::int64_t>& c) {
    std::int64_t idx = 0;
    for (int r = 0; r < n_; ++r) idx += c[r] * bucket_strides_[r];
    const auto& bucket = buckets_[static_cast<std::size_t>(idx)];
    out.insert(out.end(), bucket.begin(), bucket.end());
  });
  return true;
}

CoverMembership CoverGrid::classify(const Vector& x) const {
  CoverMembership m;
  std::vector<std::uint32_t> cand;
  if (!candidate_list(x, cand)) return m;
  for (std::uint32_t s : cand)
    if (cover_.ellipsoid(s).quadratic_form(x) < 1.0) m.containing.push_back(s);
  std::sort(m.containing.begin(), m.containing.end());
  if (m.containing.size() == 1) {
    m.region = CoverRegion::SingleCover;
    m.owner = m.containing.front();
  } else if (!m.containing.empty()) {
    m.region = CoverRegion::Overlap;
  }
  return m;
}

bool CoverGrid::inside_union(const Vector& x) const {
  std::vector<std::uint32_t> cand;
  if (!candidate_list(x, cand)) return false;
  for (std::uint32_t s : cand)
    if (cover_.ellipsoid(s).quadratic_form(x) < 1.0) return true;
  return false;
}

bool CoverGrid::inside_shrunk_union(const Vector& x, Scalar eps) const {
  const Scalar pe = cover_.p - eps;
  if (pe <= 0)
    fail(ErrorKind::UndefinedInput, "shrunk union needs eps < p");
  const Scalar a2 = std::isfinite(cover_.tau)
                        ? cover_.tau * pe + pe * pe
                        : std::numeric_limits<Scalar>::infinity();
  const Scalar b2 = pe * pe;
  std::vector<std::uint32_t> cand;
  if (!candidate_list(x, cand)) return false;
  for (std::uint32_t s : cand) {
    const TangentFrame& f = cover_.samples[s];
    const Vector d = x - f.origin;
    const Scalar t2 = (f.tangent_basis.transpose() * d).squaredNorm();
    const Scalar n2 = (f.normal_basis.transpose() * d).squaredNorm();
    if (t2 / a2 + n2 / b2 <= 1.0) return true;
  }
  return false;
}

bool CoverGrid::single_region_empty(std::uint32_t s) const {
  return single_off_[s + 1] == single_off_[s];
}

Scalar CoverGrid::dist_single(std::uint32_t s, const Vector& x) const {
  if (single_region_empty(s)) return kInfinity;
  const CoverMembership m = classify(x);
  if (m.region == CoverRegion::SingleCover && m.owner == s) return 0;
  Scalar best2 = std::numeric_limits<Scalar>::infinity();
  Vector pt(n_);
  for (std::size_t i = single_off_[s]; i < single_off_[s + 1]; ++i) {
    std::size_t rest = single_pts_[i];
    Scalar d2 = 0;
    for (int r = 0; r < n_; ++r) {
      const auto c = static_cast<std::int64_t>(rest / strides_[r]);
      rest %= static_cast<std::size_t>(strides_[r]);
      const Scalar dr = x[r] - (lo_[r] + c * h_);
      d2 += dr * dr;
      if (d2 >= best2) break;
    }
    best2 = std::min(best2, d2);
  }
  return std::sqrt(best2);
}

Scalar CoverGrid::ring_search(std::uint32_t s, const Vector& x,
                              Scalar seed_best, Scalar cap) const {
  const Ellipsoid e = cover_.ellipsoid(s);
  std::vector<std::int64_t> ci(n_);
  Scalar off_inf = 0;
  for (int r = 0; r < n_; ++r) {
    ci[r] = std::clamp<std::int64_t>(
        static_cast<std::int64_t>(std::llround((x[r] - lo_[r]) / h_)), 0,
        dims_[r] - 1);
    off_inf = std::max(off_inf, std::abs(x[r] - (lo_[r] + ci[r] * h_)));
  }
  std::int64_t rmax = 0;
  for (int r = 0; r < n_; ++r)
    rmax = std::max({rmax, ci[r], dims_[r] - 1 - ci[r]});

  Scalar best = seed_best;
  Vector pt(n_);
  const auto visit = [&](const std::vector<std::int64_t>& c) {
    std::size_t flat = 0;
    for (int r = 0; r < n_; ++r)
      flat += static_cast<std::size_t>(c[r] * strides_[r]);
    const std::int32_t o = owner_[flat];
    if (o == -1 || o == static_cast<std::int32_t>(s)) return;
    for (int r = 0; r < n_; ++r) pt[r] = lo_[r] + c[r] * h_;
    if (o == -2 && e.quadratic_form(pt) < 1.0) return;  // still inside own
    const Scalar d = (x - pt).norm();
    best = std::min(best, d);
  };

  std::vector<std::int64_t> b0(n_), b1(n_);
  for (std::int64_t ring = 0; ring <= rmax; ++ring) {
    const Scalar lb = ring * h_ - off_inf;
    if (lb >= best || best <= cap) break;
    if (ring == 0) {
      bool ok = true;
      for (int r = 0; r < n_; ++r) ok = ok && ci[r] >= 0 && ci[r] < dims_[r];
      if (ok) visit(ci);
      continue;
    }
    // Every cell with Chebyshev index-distance exactly `ring`, tiled once:
    // dimension d pinned at +-ring; dims before d range +-(ring-1), after +-ring.
    for (int d = 0; d < n_; ++d)
      for (int sign = -1; sign <= 1; sign += 2) {
        const std::int64_t cd = ci[d] + sign * ring;
        if (cd < 0 || cd >= dims_[d]) continue;
        for (int r = 0; r < n_; ++r) {
          const std::int64_t half = (r < d) ? ring - 1 : ring;
          b0[r] = std::max<std::int64_t>(0, ci[r] - half);
          b1[r] = std::min<std::int64_t>(dims_[r] - 1, ci[r] + half);
        }
        b0[d] = b1[d] = cd;
        for_each_box(b0, b1, visit);
      }
  }
  return best;
}

Scalar CoverGrid::dist_outside_own(std::uint32_t s, const Vector& x) const {
  const CoverMembership m = classify(x);
  const bool in_own = std::binary_search(m.containing.begin(),
                                         m.containing.end(), s);
  if (!m.containing.empty() && !in_own) return 0;
  return ring_search(s, x, std::numeric_limits<Scalar>::infinity(), -1.0);
}

Scalar CoverGrid::dist_outside_own_capped(std::uint32_t s, const Vector& x,
                                          Scalar cap) const {
  const CoverMembership m = classify(x);
  const bool in_own = std::binary_search(m.containing.begin(),
                                         m.containing.end(), s);
  if (!m.containing.empty() && !in_own) return 0;
  return ring_search(s, x, std::numeric_limits<Scalar>::infinity(), cap);
}

// ---------------------------------------------------------------------------
// Set distances and the partition of unity

namespace {

/// Cheap rigorous upper bound on dist(x, union minus own ellipsoid): walk a
/// few rays from x to just beyond the ellipsoid's boundary and keep those
/// exit points that land inside another ellipsoid (exact form checks).
Scalar ray_exit_bound(const CoverGrid& grid, std::uint32_t s, const Vector& x,
                      Scalar step) {
  const EllipsoidCover& cover = grid.cover();
  const Ellipsoid e = cover.ellipsoid(s);
  const TangentFrame& f = e.frame;
  const int n = static_cast<int>(f.origin.size());
  const int m = static_cast<int>(f.tangent_basis.cols());
  const Scalar inv_a2 = 1.0 / (e.tangent_semiaxis() * e.tangent_semiaxis());
  const Scalar inv_b2 = 1.0 / (e.normal_semiaxis() * e.normal_semiaxis());

  std::vector<Vector> dirs;
  const Vector radial = x - f.origin;
  if (radial.norm() > 1e-12) dirs.push_back(radial.normalized());
  for (int j = 0; j < m; ++j) {
    dirs.push_back(f.tangent_basis.col(j));
    dirs.push_back(-f.tangent_basis.col(j));
  }

  const auto form = [&](const Vector& y) {
    const Vector d = y - f.origin;
    return (f.tangent_basis.transpose() * d).squaredNorm() * inv_a2 +
           (f.normal_basis.transpose() * d).squaredNorm() * inv_b2;
  };
  const Vector dx = x - f.origin;
  const Scalar C0 = form(x) - 1.0;
  Scalar best = std::numeric_limits<Scalar>::infinity();
  Vector y(n);
  for (const Vector& u : dirs) {
    const Scalar A = (f.tangent_basis.transpose() * u).squaredNorm() * inv_a2 +
                     (f.normal_basis.transpose() * u).squaredNorm() * inv_b2;
    const Scalar B =
        2 * ((f.tangent_basis.transpose() * dx)
                 .dot(f.tangent_basis.transpose() * u) *
                 inv_a2 +
             (f.normal_basis.transpose() * dx)
                 .dot(f.normal_basis.transpose() * u) *
                 inv_b2);
    const Scalar disc = B * B - 4 * A * C0;
    if (A <= 0 || disc < 0) continue;
    const Scalar rho = (-B + std::sqrt(disc)) / (2 * A);  // outward root
    if (!(rho >= 0) || rho + step >= best) continue;
    y = x + (rho + step) * u;
    if (form(y) < 1.0) continue;  // overshoot failed (flat exit), skip
    // y is outside the own ellipsoid; inside the union makes it admissible.
    const CoverMembership cm = grid.classify(y);
    if (!cm.containing.empty()) best = rho + step;
  }
  return best;
}

}  // namespace

std::vector<SetDistances> set_distances(const CoverGrid& grid,
                                        const Vector& x) {
  const CoverMembership m = grid.classify(x);
  if (m.containing.empty())
    fail(ErrorKind::UndefinedInput,
         "set distances are defined on the union only");
  std::vector<SetDistances> out;
  out.reserve(m.containing.size());
  for (std::uint32_t s : m.containing)
    out.push_back({s, grid.dist_single(s, x), grid.dist_outside_own(s, x)});
  return out;
}

PartitionWeights partition_of_unity(const CoverGrid& grid, const Vector& x) {
  const CoverMembership m = grid.classify(x);
  if (m.containing.empty())
    fail(ErrorKind::UndefinedInput,
         "partition of unity is defined on the union only");
  PartitionWeights pw;
  pw.f.reserve(m.containing.size());

  if (m.region == CoverRegion::SingleCover) {
    // x lies in the single-cover set itself: its bump is exactly 1.
    pw.f.emplace_back(m.owner, 1.0);
    pw.f_p = 0.0;
    return pw;
  }

  Scalar total = 0;
  for (std::uint32_t s : m.containing) {
    Scalar fs = 0;
    if (!grid.single_region_empty(s)) {
      const Scalar d_se = grid.dist_single(s, x);
      // The bump vanishes unless d_single < (2/3) d_outside, i.e. unless
      // d_outside > 1.5 d_single; try cheap upper bounds before the exact
      // ring search.
      const Scalar cap = 1.5 * d_se;
      Scalar d_de = ray_exit_bound(grid, s, x, 0.5 * grid.h());
      if (d_de > cap)
        d_de = grid.dist_outside_own_capped(s, x, cap);
      if (d_de > cap) {
        const Scalar beta = (2.0 / 3.0) * d_de - d_se;   // > 0 off T~_de
        const Scalar alpha = d_se - 0.5 * d_de;          // > 0 off T~_se
        const Scalar pb = psi(beta), pa = psi(alpha);
        fs = pb / (pb + pa);
      }
    }
    if (fs > 0) pw.f.emplace_back(s, fs);
    total += fs;
  }
  pw.f_p = 1.0 - total;
  return pw;
}

// ---------------------------------------------------------------------------
// Fields

Vector local_field(const Ellipsoid& e, const AnalyticManifold& model,
                   const Vector& x) {
  const Vector prv = model.project(x) - x;
  if (prv.norm() == 0) return Vector::Zero(x.size());
  const TangentFrame& f = e.frame;
  const Vector d = x - f.origin;
  const Scalar q = pep(f, e.tau, x);
  if (q <= 0) return prv;

  // Outward normal of the depth-q level ellipsoid through x.
  Vector grad = Vector::Zero(x.size());
  if (std::isfinite(e.tau)) {
    const Vector tc = f.tangent_basis.transpose() * d;
    grad += f.tangent_basis * tc / (e.tau * q + q * q);
  }
  const Vector nc = f.normal_basis.transpose() * d;
  grad += f.normal_basis * nc / (q * q);
  const Scalar gn = grad.norm();
  if (gn == 0) return prv;
  const Vector u = grad / gn;

  const Scalar c = prv.dot(u);
  if (c <= 0) return prv;
  return prv - c * u;
}

GluedField glued_field(const CoverGrid& grid, const AnalyticManifold& model,
                       const Vector& x) {
  const Vector pr = model.project(x);
  const Vector prv = pr - x;
  const Scalar np = prv.norm();
  if (np == 0)
    fail(ErrorKind::UndefinedInput,
         "the glued field is undefined on the manifold itself");
  const PartitionWeights pw = partition_of_unity(grid, x);

  GluedField g;
  g.w_tilde = pw.f_p * prv;
  for (const auto& [s, fs] : pw.f)
    if (fs > 0)
      g.w_tilde += fs * local_field(grid.cover().ellipsoid(s), model, x);

  const Scalar den = g.w_tilde.dot(prv);
  if (!(den > 0))
    fail(ErrorKind::UndefinedInput,
         "glued field degenerated: blend lost its descent component");
  g.v_field = (np / den) * g.w_tilde;
  return g;
}

// ---------------------------------------------------------------------------
// Retraction

Retraction::Retraction(RetractionConfig config)
    : config_(std::move(config)), grid_(config_.cover, config_.set_grid_h) {
  const Scalar p = config_.cover.p;
  if (!(config_.lambda > 0) || !(config_.lambda < p) ||
      std::abs(config_.w - 0.5 * (p - config_.lambda)) > 1e-12)
    fail(ErrorKind::InfeasibleParameters,
         "inconsistent retraction config: w must equal (p - lambda)/2 > 0");
  const Scalar cap =
      std::min(config_.w, epsilon_ceiling(p, config_.lambda, config_.cover.tau));
  if (!(config_.epsilon > 0) || !(config_.epsilon < cap))
    fail(ErrorKind::InfeasibleParameters,
         "inconsistent retraction config: epsilon outside (0, min(w, ceiling))");
  if (!(config_.rk_step > 0))
    fail(ErrorKind::InfeasibleParameters, "integrator step must be positive");
}

PartitionWeights Retraction::partition(const Vector& x) const {
  return partition_of_unity(grid_, x);
}

GluedField Retraction::field(const Vector& x) const {
  return glued_field(grid_, config_.model, x);
}

FlowTrace Retraction::flow_trace(const Vector& x, Scalar t) const {
  if (!(t >= 0))
    fail(ErrorKind::UndefinedInput, "flow time must be nonnegative");
  if (!grid_.inside_union(x))
    fail(ErrorKind::UndefinedInput, "flow starts outside the union");
  const Scalar d0 = config_.model.distance(x);
  if (d0 == 0)
    fail(ErrorKind::UndefinedInput, "flow starts on the manifold");
  if (t > d0 - config_.w + 1e-9)
    fail(ErrorKind::UndefinedInput,
         "flow time exceeds d(M, x) - w: the trajectory would cross the "
         "hand-over offset");
  const bool shrunk0 = grid_.inside_shrunk_union(x, config_.epsilon);

  FlowTrace trace;
  trace.start = x;
  Vector cur = x;
  Scalar tcur = 0;
  GluedField g = field(cur);
  trace.samples.push_back({0, cur, d0, g.v_field});

  while (t - tcur > 1e-15) {
    Scalar dt = std::min(config_.rk_step, t - tcur);
    Vector xn;
    Scalar dn = 0;
    bool accepted = false;
    for (int halving = 0; halving < 60 && !accepted; ++halving) {
      try {
        const Vector& k1 = g.v_field;
        const Vector k2 = field(cur + (dt / 2) * k1).v_field;
        const Vector k3 = field(cur + (dt / 2) * k2).v_field;
        const Vector k4 = field(cur + dt * k3).v_field;
        xn = cur + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
        dn = config_.model.distance(xn);
      } catch (const Error& err) {
        // An intermediate stage strayed where the field is undefined; the
        // exact trajectory cannot, so refine the step.
        if (err.kind() != ErrorKind::UndefinedInput) throw;
        dt /= 2;
        continue;
      }
      if (dn < config_.w - 1e-9 && dt > 1e-12) {
        dt /= 2;  // overshot the hand-over offset
        continue;
      }
      if (!grid_.inside_union(xn))
        fail(ErrorKind::ContainmentViolation,
             "flow step left the ellipsoid union");
      if (shrunk0 && !grid_.inside_shrunk_union(xn, config_.epsilon))
        fail(ErrorKind::ContainmentViolation,
             "flow step left the shrunk union it started in");
      accepted = true;
    }
    if (!accepted)
      fail(ErrorKind::ContainmentViolation,
           "flow step size underflowed while avoiding the union boundary");
    cur = xn;
    tcur += dt;
    g = field(cur);
    trace.samples.push_back({tcur, cur, dn, g.v_field});
  }
  trace.terminal = cur;
  return trace;
}

Vector Retraction::flow(const Vector& x, Scalar t) const {
  return flow_trace(x, t).terminal;
}

Vector Retraction::retract_point(const Vector& x, Scalar t) const {
  if (!(t >= 0) || !(t <= 1))
    fail(ErrorKind::UndefinedInput, "retraction time must lie in [0, 1]");
  if (!grid_.inside_union(x))
    fail(ErrorKind::UndefinedInput, "retraction is defined on the union only");
  const Scalar s1 = std::min<Scalar>(1.0, 2 * t);
  const Scalar s2 = std::max<Scalar>(0.0, 2 * t - 1);
  const Scalar d = config_.model.distance(x);
  Vector y = x;
  if (d > config_.w && s1 > 0) y = flow(x, s1 * (d - config_.w));
  if (s2 > 0) y = (1 - s2) * y + s2 * config_.model.project(y);
  return y;
}

// ---------------------------------------------------------------------------
// Certified-inequality scans

Scalar verify_halfline_inequality(Scalar grid_step) {
  if (!(grid_step > 0) || grid_step > 0.01 + 1e-15)
    fail(ErrorKind::UndefinedInput, "grid step must lie in (0, 0.01]");
  Scalar worst = -std::numeric_limits<Scalar>::infinity();
  std::vector<Scalar> chis;
  for (Scalar chi = 0; chi < kPi / 2 - 1e-12; chi += grid_step)
    chis.push_back(chi);
  chis.push_back(kPi / 2);
  for (Scalar q = grid_step; q < 1 - 1e-12; q += grid_step)
    for (Scalar l = grid_step; l < 1 - 1e-12; l += grid_step)
      for (const Scalar chi : chis) {
        const Scalar c = std::cos(chi);
        const Scalar root = std::sqrt((1 + q) / (c * c + q));
        for (int b = -1; b <= 1; b += 2) {
          const Scalar e = (1 + q) * (1 + q) - q * (1 + b * c) * (1 + b * c) +
                           1 - 2 * (1 - l) * root * (q - b * c);
          worst = std::max(worst, e);
        }
      }
  return worst;
}

AngleBoundResult verify_angle_bound_scan(Scalar grid_step) {
  if (!(grid_step > 0) || grid_step > 0.01 + 1e-15)
    fail(ErrorKind::UndefinedInput, "grid step must lie in (0, 0.01]");
  AngleBoundResult res;
  res.min_angle = std::numeric_limits<Scalar>::infinity();

  std::vector<Scalar> chis;
  for (Scalar chi = 0; chi < kPi / 2 - 1e-12; chi += grid_step)
    chis.push_back(chi);
  chis.push_back(kPi / 2);

  const Scalar scan_step = kPi / 256;
  for (Scalar q = grid_step; q < 1 - 1e-12; q += grid_step)
    for (const Scalar chi : chis) {
      const Scalar sc = std::sin(chi), cc = std::cos(chi);
      const Scalar tx = std::sqrt(q + q * q);
      const Scalar X0 = tx * sc, X1 = q * cc;
      const Scalar nn = std::sqrt(q * cc * cc + q * q);
      const Scalar n0 = q * sc / nn, n1 = tx * cc / nn;
      // Distance between the osculating-ball centers once the contact
      // normal is rotated by theta (sense sg).
      const auto dist = [&](Scalar theta, int sg) {
        const Scalar ct = std::cos(theta), st = std::sin(sg * theta);
        const Scalar m0 = ct * n0 - st * n1;
        const Scalar m1 = st * n0 + ct * n1;
        const Scalar dx = X0 - m0, dy = X1 - m1 + 1;
        return std::sqrt(dx * dx + dy * dy);
      };
      Scalar local = std::numeric_limits<Scalar>::infinity();
      for (int sg = -1; sg <= 1; sg += 2) {
        if (dist(0, sg) >= 2) {
          local = 0;
          break;
        }
        Scalar prev = 0;
        Scalar hit = -1;
        for (Scalar th = scan_step; th <= kPi + 1e-12; th += scan_step) {
          if (dist(th, sg) >= 2) {
            hit = th;
            break;
          }
          prev = th;
        }
        if (hit < 0) continue;  // this sense never detaches
        Scalar a = prev, b = hit;
        for (int it = 0; it < 80; ++it) {
          const Scalar mid = 0.5 * (a + b);
          (dist(mid, sg) >= 2 ? b : a) = mid;
        }
        const Scalar theta = 0.5 * (a + b);
        res.max_abs_residual =
            std::max(res.max_abs_residual, std::abs(dist(theta, sg) - 2));
        local = std::min(local, theta);
      }
      if (local < res.min_angle) {
        res.min_angle = local;
        res.argmin_q = q;
        res.argmin_chi = chi;
      }
    }
  return res;
}

Scalar verify_angle_bound(Scalar grid_step) {
  return verify_angle_bound_scan(grid_step).min_angle;
}

}  // namespace ellcover
