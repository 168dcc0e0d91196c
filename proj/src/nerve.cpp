#include "ellcover/nerve.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <thread>

#include "ellcover/errors.hpp"

namespace ellcover {

namespace {

// ---------------------------------------------------------------------------
// Flat-array ellipsoid kernels.  The nerve construction evaluates quadratic
// forms and projections hundreds of millions of times; these kernels work on
// contiguous doubles to keep that loop free of temporaries.
// ---------------------------------------------------------------------------

/// Newton on the dual multiplier of the ellipsoid projection.  h(mu) =
/// A ia/(1+mu ia)^2 + B ib/(1+mu ib)^2 - 1 is decreasing and convex on
/// mu >= 0 with h(0) > 0, so the iteration converges monotonically from 0.
/// A warm start above the root jumps below it after one tangent step
/// (tangents of a convex function underestimate), clamped at 0, and then
/// converges monotonically as well; callers iterating a slowly-moving point
/// reuse the previous multiplier and typically finish in one or two steps.
inline double project_mu(double A, double B, double ia, double ib,
                         double mu0 = 0.0) {
  double mu = mu0 > 0.0 ? mu0 : 0.0;
  for (int it = 0; it < 80; ++it) {
    const double sa = 1.0 + mu * ia, sb = 1.0 + mu * ib;
    const double ha = A * ia / (sa * sa), hb = B * ib / (sb * sb);
    const double h = ha + hb - 1.0;
    if (std::abs(h) <= 1e-14) break;
    const double dh = -2.0 * (ha * ia / sa + hb * ib / sb);
    const double step = h / dh;
    mu -= step;
    if (mu < 0) mu = 0;
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(mu))) break;
  }
  return mu;
}

// Fixed-dimension kernels.  N is the compile-time ambient dimension, so the
// loops fully unroll; `rec` is one pack record (see EllPack below).

template <int N>
double form_fix(const double* rec, int m, const double* x) {
  const double* o = rec + N * N;
  const double ia = o[N], ib = o[N + 1];
  double dx[N];
  for (int c = 0; c < N; ++c) dx[c] = x[c] - o[c];
  double acc = 0;
  for (int i = 0; i < N; ++i) {
    double dot = 0;
    for (int c = 0; c < N; ++c) dot += rec[i * N + c] * dx[c];
    acc += dot * dot * (i < m ? ia : ib);
  }
  return acc;
}

template <int N>
double form_grad_fix(const double* rec, int m, const double* x, double* g) {
  const double* o = rec + N * N;
  const double ia = o[N], ib = o[N + 1];
  double dx[N];
  for (int c = 0; c < N; ++c) {
    dx[c] = x[c] - o[c];
    g[c] = 0;
  }
  double acc = 0;
  for (int i = 0; i < N; ++i) {
    double dot = 0;
    for (int c = 0; c < N; ++c) dot += rec[i * N + c] * dx[c];
    const double wgt = (i < m ? ia : ib);
    acc += dot * dot * wgt;
    const double s = 2.0 * dot * wgt;
    for (int c = 0; c < N; ++c) g[c] += s * rec[i * N + c];
  }
  return acc;
}

template <int N>
void project_fix(const double* rec, int m, const double* x, double* out,
                 double* coords, double* mu_io) {
  const double* o = rec + N * N;
  const double ia = o[N], ib = o[N + 1];
  double dx[N];
  for (int c = 0; c < N; ++c) dx[c] = x[c] - o[c];
  double A = 0, B = 0;
  for (int i = 0; i < N; ++i) {
    double dot = 0;
    for (int c = 0; c < N; ++c) dot += rec[i * N + c] * dx[c];
    coords[i] = dot;
    (i < m ? A : B) += dot * dot;
  }
  if (A * ia + B * ib <= 1.0) {
    if (out != x) std::memcpy(out, x, sizeof(double) * N);
    return;
  }
  const double mu = project_mu(A, B, ia, ib, mu_io ? *mu_io : 0.0);
  if (mu_io) *mu_io = mu;
  const double sa = 1.0 / (1.0 + mu * ia), sb = 1.0 / (1.0 + mu * ib);
  for (int c = 0; c < N; ++c) out[c] = o[c];
  for (int i = 0; i < N; ++i) {
    const double s = coords[i] * (i < m ? sa : sb);
    for (int c = 0; c < N; ++c) out[c] += s * rec[i * N + c];
  }
}

// Runtime-dimension fallbacks for ambient dimensions without a fixed kernel.

inline double form_any(const double* rec, int n, int m, const double* x) {
  const double* o = rec + static_cast<std::size_t>(n) * n;
  const double ia = o[n], ib = o[n + 1];
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = rec + static_cast<std::size_t>(i) * n;
    double dot = 0;
    for (int c = 0; c < n; ++c) dot += row[c] * (x[c] - o[c]);
    acc += dot * dot * (i < m ? ia : ib);
  }
  return acc;
}

inline double form_grad_any(const double* rec, int n, int m, const double* x,
                            double* g) {
  const double* o = rec + static_cast<std::size_t>(n) * n;
  const double ia = o[n], ib = o[n + 1];
  double acc = 0;
  for (int c = 0; c < n; ++c) g[c] = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = rec + static_cast<std::size_t>(i) * n;
    double dot = 0;
    for (int c = 0; c < n; ++c) dot += row[c] * (x[c] - o[c]);
    const double wgt = (i < m ? ia : ib);
    acc += dot * dot * wgt;
    const double s = 2.0 * dot * wgt;
    for (int c = 0; c < n; ++c) g[c] += s * row[c];
  }
  return acc;
}

inline void project_any(const double* rec, int n, int m, const double* x,
                        double* out, double* coords, double* mu_io) {
  const double* o = rec + static_cast<std::size_t>(n) * n;
  const double ia = o[n], ib = o[n + 1];
  double A = 0, B = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = rec + static_cast<std::size_t>(i) * n;
    double dot = 0;
    for (int c = 0; c < n; ++c) dot += row[c] * (x[c] - o[c]);
    coords[i] = dot;
    (i < m ? A : B) += dot * dot;
  }
  if (A * ia + B * ib <= 1.0) {
    if (out != x) std::memcpy(out, x, sizeof(double) * n);
    return;
  }
  const double mu = project_mu(A, B, ia, ib, mu_io ? *mu_io : 0.0);
  if (mu_io) *mu_io = mu;
  const double sa = 1.0 / (1.0 + mu * ia), sb = 1.0 / (1.0 + mu * ib);
  for (int c = 0; c < n; ++c) out[c] = o[c];
  for (int i = 0; i < n; ++i) {
    const double* row = rec + static_cast<std::size_t>(i) * n;
    const double s = coords[i] * (i < m ? sa : sb);
    for (int c = 0; c < n; ++c) out[c] += s * row[c];
  }
}

/// Interleaved flat pack of ellipsoid records.  Record i holds, contiguously:
/// the n x n orthonormal row basis (tangent rows first, then normal), the
/// center, and the two inverse squared semi-axes (tangent weight is 0 for
/// slabs); records are padded to cache-line multiples.  One base pointer plus
/// a stride keeps the hot kernels free of per-ellipsoid pointer chases.
struct EllPack {
  int n = 0;               ///< ambient dimension
  std::size_t stride = 0;  ///< doubles per record (padded)
  std::vector<double> data;
  std::vector<int> mdim;  ///< tangent dimension per record

  void reserve(std::size_t count, int ambient) {
    n = ambient;
    stride = (static_cast<std::size_t>(n) * n + n + 2 + 7) & ~std::size_t{7};
    data.reserve(count * stride);
    mdim.reserve(count);
  }

  void add(const Ellipsoid& e) {
    const int en = static_cast<int>(e.frame.ambient_dim());
    const int m = static_cast<int>(e.frame.tangent_dim());
    if (en != n)
      fail(ErrorKind::DomainViolation,
           "ellipsoid family mixes ambient dimensions");
    const std::size_t base = data.size();
    data.resize(base + stride, 0.0);
    double* r = data.data() + base;
    for (int i = 0; i < m; ++i)
      for (int c = 0; c < n; ++c)
        r[static_cast<std::size_t>(i) * n + c] = e.frame.tangent_basis(c, i);
    for (int j = 0; j < n - m; ++j)
      for (int c = 0; c < n; ++c)
        r[static_cast<std::size_t>(m + j) * n + c] = e.frame.normal_basis(c, j);
    double* o = r + static_cast<std::size_t>(n) * n;
    for (int c = 0; c < n; ++c) o[c] = e.frame.origin[c];
    const double b2 = e.p * e.p;
    o[n] = std::isfinite(e.tau) ? 1.0 / (e.tau * e.p + b2) : 0.0;
    o[n + 1] = 1.0 / b2;
    mdim.push_back(m);
  }

  const double* rec(std::uint32_t i) const { return data.data() + i * stride; }
  const double* origin(std::uint32_t i) const {
    return rec(i) + static_cast<std::size_t>(n) * n;
  }
  double inv_a2(std::uint32_t i) const { return origin(i)[n]; }
  double inv_b2(std::uint32_t i) const { return origin(i)[n + 1]; }

  double form(std::uint32_t i, const double* x) const {
    const double* r = rec(i);
    const int m = mdim[i];
    switch (n) {
      case 2: return form_fix<2>(r, m, x);
      case 3: return form_fix<3>(r, m, x);
      case 4: return form_fix<4>(r, m, x);
      default: return form_any(r, n, m, x);
    }
  }

  double form_grad(std::uint32_t i, const double* x, double* g) const {
    const double* r = rec(i);
    const int m = mdim[i];
    switch (n) {
      case 2: return form_grad_fix<2>(r, m, x, g);
      case 3: return form_grad_fix<3>(r, m, x, g);
      case 4: return form_grad_fix<4>(r, m, x, g);
      default: return form_grad_any(r, n, m, x, g);
    }
  }

  /// Euclidean projection onto the closed ellipsoid.  Interior points are
  /// fixed; exterior points are pulled back via Newton on the dual
  /// multiplier; `mu_io` optionally carries the multiplier across calls as a
  /// warm start.
  void project(std::uint32_t i, const double* x, double* out, double* coords,
               double* mu_io = nullptr) const {
    const double* r = rec(i);
    const int m = mdim[i];
    switch (n) {
      case 2: project_fix<2>(r, m, x, out, coords, mu_io); return;
      case 3: project_fix<3>(r, m, x, out, coords, mu_io); return;
      case 4: project_fix<4>(r, m, x, out, coords, mu_io); return;
      default: project_any(r, n, m, x, out, coords, mu_io); return;
    }
  }
};

struct ApScratch {
  std::vector<double> x, x0, coords, mid;
  std::vector<double> mu;  ///< per-set projection multiplier warm starts
  void resize(int n, int k) {
    x.resize(n);
    x0.resize(n);
    coords.resize(n);
    mid.resize(n);
    mu.assign(k, 0.0);
  }
};

bool farkas_reject(const EllPack& ells, const std::uint32_t* family, int k,
                   double a, double tol, const double* x);

/// Cyclic alternating projection over a family given by indices into an
/// ellipsoid pack.  Writes the final point into scratch.x.  `start` seeds the
/// iteration (default: mean of the centers); the verdict certificates do not
/// depend on the seed, so a warm start near the suspected intersection only
/// shortens the run.  When `farkas_a` is finite, the run periodically probes
/// the rolling cycle centroid for the tangent-halfspace emptiness
/// certificate, which settles decisively disjoint families long before the
/// iterates stall.
IntersectStatus ap_run(const EllPack& ells, const std::uint32_t* family, int k,
                       Scalar tol, std::uint32_t max_iters, ApScratch& s,
                       Scalar* gap, std::uint32_t* iters,
                       const double* start = nullptr,
                       double farkas_a = std::numeric_limits<double>::quiet_NaN()) {
  const int n = ells.n;
  s.resize(n, k);
  if (start) {
    std::memcpy(s.x.data(), start, sizeof(double) * n);
  } else {
    for (int r = 0; r < n; ++r) s.x[r] = 0;
    for (int i = 0; i < k; ++i) {
      const double* o = ells.origin(family[i]);
      for (int r = 0; r < n; ++r) s.x[r] += o[r];
    }
    for (int r = 0; r < n; ++r) s.x[r] /= k;
  }
  const bool probe_enabled = std::isfinite(farkas_a);
  const double stall = tol * tol;
  // The iterates of a stalled cycle rattle at the ulp scale of x, so the
  // displacement test needs a machine-precision floor below which no further
  // progress is observable in doubles.
  const double eps_floor = 64.0 * std::numeric_limits<double>::epsilon();
  int polish_left = 6;
  // Probe gating: while the residual is still falling window over window the
  // midpoint certificate cannot fire, so those opportunities are skipped.  A
  // disjoint family's residual converges to a positive limit (or a bounded
  // limit cycle), so consecutive windows eventually flatten and the
  // certificate is reached; witnesses keep converging and skip the waste.
  double prev_mf = 2.0, ref_mf = 0.0;  // ref 0 forces the first opportunity
  for (std::uint32_t cyc = 0; cyc < max_iters; ++cyc) {
    const bool opportunity = probe_enabled && (cyc & 7u) == 7u;
    const bool probe = opportunity && prev_mf > 0.97 * ref_mf;
    if (opportunity) ref_mf = prev_mf;
    std::memcpy(s.x0.data(), s.x.data(), sizeof(double) * n);
    if (probe) std::memset(s.mid.data(), 0, sizeof(double) * n);
    for (int i = 0; i < k; ++i) {
      ells.project(family[i], s.x.data(), s.x.data(), s.coords.data(),
                   &s.mu[i]);
      if (probe)
        for (int r = 0; r < n; ++r) s.mid[r] += s.x[r];
    }
    // the point was just projected onto the last set, so its form there is
    // 1 up to the projection's Newton tolerance, far inside the band
    double maxform = 0;
    for (int i = 0; i < k - 1; ++i)
      maxform = std::max(maxform, ells.form(family[i], s.x.data()));
    if (iters) *iters = cyc + 1;
    if (maxform <= 1.0 + tol) return IntersectStatus::Witness;
    if (probe && maxform > 1.0 + 10.0 * tol) {
      for (int r = 0; r < n; ++r) s.mid[r] /= k;
      if (farkas_reject(ells, family, k, farkas_a, tol, s.mid.data())) {
        if (gap) *gap = maxform - 1.0;
        return IntersectStatus::Disjoint;
      }
    }
    prev_mf = maxform;
    double disp = 0, xnorm2 = 0;
    for (int r = 0; r < n; ++r) {
      const double d = s.x[r] - s.x0[r];
      disp += d * d;
      xnorm2 += s.x[r] * s.x[r];
    }
    const double floor2 = eps_floor * eps_floor * (1.0 + xnorm2);
    if (cyc > 0 && (disp < stall * stall || disp <= floor2)) {
      // Only a decisive gap certifies disjointness; a stall inside the
      // tolerance band is a tangency beyond numeric resolution.
      if (maxform <= 1.0 + 10.0 * tol) return IntersectStatus::Inconclusive;
      if (gap) *gap = maxform - 1.0;
      return IntersectStatus::Disjoint;
    }
    // Feasibility polish: near the intersection, the min-norm Newton step of
    // the first-order system f_i + g_i . d = target_i (d = G^T alpha with
    // Gram system (G G^T) alpha = target - f) converges quadratically, so a
    // handful of steps land inside the tolerance band as soon as the cycle
    // reaches the linear tail.  Candidates are only ever *tested* as
    // witnesses — the iterate sequence itself is untouched, so every other
    // verdict is exactly the plain cycle's.  Families without interior never
    // pass the test; the attempt cap keeps their overhead negligible.
    if (n <= 8 && k <= 4 && polish_left > 0 &&
        ((cyc & 3u) == 3u || cyc == 1u) && maxform <= 1.0 + 1e-3) {
      --polish_left;
      double y[8];
      std::memcpy(y, s.x.data(), sizeof(double) * n);
      double mf_y = maxform;
      for (int step = 0; step < 6; ++step) {
        double G[4 * 8], f[4];
        for (int i = 0; i < k; ++i)
          f[i] = ells.form_grad(family[i], y, G + i * 8);
        double GG[16], rhs[4], alpha[4];
        for (int i = 0; i < k; ++i) {
          for (int j = 0; j <= i; ++j) {
            double acc = 0;
            for (int r = 0; r < n; ++r) acc += G[i * 8 + r] * G[j * 8 + r];
            GG[i * k + j] = GG[j * k + i] = acc;
          }
          rhs[i] = std::min(f[i], 1.0 - 0.25 * tol) - f[i];
        }
        int perm[4] = {0, 1, 2, 3};
        bool singular = false;
        for (int c = 0; c < k; ++c) {
          int piv = c;
          for (int r = c + 1; r < k; ++r)
            if (std::abs(GG[perm[r] * k + c]) > std::abs(GG[perm[piv] * k + c]))
              piv = r;
          std::swap(perm[c], perm[piv]);
          const double dpi = GG[perm[c] * k + c];
          if (std::abs(dpi) < 1e-300) {
            singular = true;
            break;
          }
          for (int r = c + 1; r < k; ++r) {
            const double fac = GG[perm[r] * k + c] / dpi;
            for (int cc = c; cc < k; ++cc)
              GG[perm[r] * k + cc] -= fac * GG[perm[c] * k + cc];
            rhs[perm[r]] -= fac * rhs[perm[c]];
          }
        }
        if (singular) break;
        for (int c = k - 1; c >= 0; --c) {
          double acc = rhs[perm[c]];
          for (int cc = c + 1; cc < k; ++cc)
            acc -= GG[perm[c] * k + cc] * alpha[cc];
          alpha[c] = acc / GG[perm[c] * k + c];
        }
        double d[8];
        for (int r = 0; r < n; ++r) {
          double acc = 0;
          for (int i = 0; i < k; ++i) acc += alpha[i] * G[i * 8 + r];
          d[r] = acc;
        }
        // backtracking on the max-form merit keeps sliver intersections
        // (near-antiparallel gradients) from oscillating past the target
        bool improved = false;
        double scale = 1.0;
        for (int bt = 0; bt < 5; ++bt, scale *= 0.5) {
          double yt[8];
          for (int r = 0; r < n; ++r) yt[r] = y[r] + scale * d[r];
          double mft = 0;
          for (int i = 0; i < k; ++i)
            mft = std::max(mft, ells.form(family[i], yt));
          if (mft <= 1.0 + tol) {
            std::memcpy(s.x.data(), yt, sizeof(double) * n);
            if (iters) *iters = cyc + 1;
            return IntersectStatus::Witness;
          }
          if (mft < mf_y) {
            std::memcpy(y, yt, sizeof(double) * n);
            mf_y = mft;
            improved = true;
            break;
          }
        }
        if (!improved) break;
      }
    }
  }
  return IntersectStatus::Inconclusive;
}

/// Rigorous emptiness certificate at a probe point x.  Convexity puts each
/// ellipsoid inside the halfspace {y : g_i . (y - x) <= 1 - f_i} cut by its
/// tangent data f_i = form_i(x) > 1, g_i = grad form_i(x).  For weights
/// lambda >= 0 summing to 1 with rho = |sum lambda_i g_i| and
/// dbar = sum lambda_i (f_i - 1), any point common to the halfspaces sits at
/// distance >= dbar / rho from x (Cauchy-Schwarz).  A common point of the
/// ellipsoids also lies within min_i |x - c_i| + a of x, so dbar > rho * R
/// proves the family empty.  Exact for the min-max point, and robust in a
/// neighbourhood of it.
bool farkas_reject(const EllPack& ells, const std::uint32_t* family, int k,
                   double a, double tol, const double* x) {
  const int n = ells.n;
  if (n > 8 || k > 4 || !std::isfinite(a)) return false;
  double g[4 * 8], delta[4], R = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    const double f = ells.form_grad(family[i], x, g + i * 8);
    if (!(f > 1.0 + 10.0 * tol)) return false;
    delta[i] = f - 1.0;
    const double* o = ells.origin(family[i]);
    double d2 = 0;
    for (int r = 0; r < n; ++r) {
      const double d = x[r] - o[r];
      d2 += d * d;
    }
    R = std::min(R, std::sqrt(d2) + a);
  }
  // Search the simplex faces for weights that certify: on each subset the
  // min-norm affine combination solves a <=3x3 normal system in the gradient
  // differences; only nonnegative solutions count.
  for (unsigned mask = 1; mask < (1u << k); ++mask) {
    int idx[4], kk = 0;
    for (int i = 0; i < k; ++i)
      if (mask & (1u << i)) idx[kk++] = i;
    double lam[4];
    if (kk == 1) {
      lam[0] = 1.0;
    } else {
      // minimize |g0 + sum mu_j (g_j - g_0)|^2
      const int mdim = kk - 1;
      double M[9], rhs[3], mu[3];
      for (int i = 0; i < mdim; ++i) {
        const double* di = g + idx[i + 1] * 8;
        const double* d0 = g + idx[0] * 8;
        for (int j = 0; j <= i; ++j) {
          const double* dj = g + idx[j + 1] * 8;
          double acc = 0;
          for (int r = 0; r < n; ++r)
            acc += (di[r] - d0[r]) * (dj[r] - d0[r]);
          M[i * mdim + j] = M[j * mdim + i] = acc;
        }
        double acc = 0;
        for (int r = 0; r < n; ++r) acc += (di[r] - d0[r]) * d0[r];
        rhs[i] = -acc;
      }
      // tiny Cholesky-free solve with partial pivoting
      int perm[3] = {0, 1, 2};
      bool singular = false;
      for (int c = 0; c < mdim && !singular; ++c) {
        int piv = c;
        for (int r = c + 1; r < mdim; ++r)
          if (std::abs(M[perm[r] * mdim + c]) > std::abs(M[perm[piv] * mdim + c]))
            piv = r;
        std::swap(perm[c], perm[piv]);
        const double d = M[perm[c] * mdim + c];
        if (std::abs(d) < 1e-300) {
          singular = true;
          break;
        }
        for (int r = c + 1; r < mdim; ++r) {
          const double f = M[perm[r] * mdim + c] / d;
          for (int cc = c; cc < mdim; ++cc)
            M[perm[r] * mdim + cc] -= f * M[perm[c] * mdim + cc];
          rhs[perm[r]] -= f * rhs[perm[c]];
        }
      }
      if (singular) continue;
      for (int c = mdim - 1; c >= 0; --c) {
        double acc = rhs[perm[c]];
        for (int cc = c + 1; cc < mdim; ++cc)
          acc -= M[perm[c] * mdim + cc] * mu[cc];
        mu[c] = acc / M[perm[c] * mdim + c];
      }
      double s = 0;
      bool ok = true;
      for (int j = 0; j < mdim; ++j) {
        if (mu[j] < 0) ok = false;
        s += mu[j];
      }
      if (!ok || s > 1) continue;
      lam[0] = 1 - s;
      for (int j = 0; j < mdim; ++j) lam[j + 1] = mu[j];
    }
    double comb[8] = {0, 0, 0, 0, 0, 0, 0, 0}, dbar = 0;
    for (int i = 0; i < kk; ++i) {
      for (int r = 0; r < n; ++r) comb[r] += lam[i] * g[idx[i] * 8 + r];
      dbar += lam[i] * delta[idx[i]];
    }
    double rho2 = 0;
    for (int r = 0; r < n; ++r) rho2 += comb[r] * comb[r];
    if (dbar > 0 && dbar * dbar > rho2 * R * R * (1 + 1e-9) + 1e-18) return true;
  }
  return false;
}

/// Closed-form pair separation: if the support radii of the two ellipsoids
/// along their center line leave a positive gap, a hyperplane orthogonal to
/// that line separates them.
bool support_separated(const EllPack& P, std::uint32_t ia, std::uint32_t ib) {
  const int n = P.n;
  if (n > 8) return false;
  double u[8], d2 = 0;
  const double* ca = P.origin(ia);
  const double* cb = P.origin(ib);
  for (int r = 0; r < n; ++r) {
    u[r] = cb[r] - ca[r];
    d2 += u[r] * u[r];
  }
  const double d = std::sqrt(d2);
  if (d == 0) return false;
  double h = 0;
  for (const std::uint32_t e : {ia, ib}) {
    const double* rows = P.rec(e);
    const double wa = P.inv_a2(e), wb = P.inv_b2(e);
    const int m = P.mdim[e];
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      const double* row = rows + static_cast<std::size_t>(i) * n;
      double dot = 0;
      for (int r = 0; r < n; ++r) dot += row[r] * u[r];
      acc += dot * dot / (i < m ? wa : wb);
    }
    h += std::sqrt(acc);
  }
  return d * d - h > 1e-9 * (1.0 + d * d);  // gap in units of d
}

/// Runs fn(chunk, lo, hi) over a static partition of [0, total) into
/// `workers` contiguous chunks.  Chunk outputs must be gathered by chunk
/// index so results are independent of the worker count.
template <class Fn>
void run_chunked(std::size_t total, unsigned workers, Fn&& fn) {
  if (workers <= 1 || total == 0) {
    fn(0u, std::size_t{0}, total);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned c = 0; c < workers; ++c) {
    const std::size_t lo = total * c / workers;
    const std::size_t hi = total * (c + 1) / workers;
    pool.emplace_back([&fn, c, lo, hi] { fn(c, lo, hi); });
  }
  for (auto& t : pool) t.join();
}

struct DisjointSet {
  std::vector<std::uint32_t> parent;
  explicit DisjointSet(std::size_t n) : parent(n) {
    for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<std::uint32_t>(i);
  }
  std::uint32_t find(std::uint32_t v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  }
  void unite(std::uint32_t a, std::uint32_t b) { parent[find(a)] = find(b); }
};

// ---------------------------------------------------------------------------
// Streaming GF(2) column reduction.  Columns arrive as short descending
// lists of row ids; each either cancels to nothing or claims an unowned
// pivot row.  Claimed columns have distinct pivots (hence are independent)
// and every cancelled column is a sum of claimed ones, so the rank is
// exactly the number of claims.  The column order is immaterial.
// ---------------------------------------------------------------------------
class Gf2Reducer {
 public:
  explicit Gf2Reducer(std::size_t rows) : owner_(rows, kNone) {}

  void add_column(const std::uint32_t* ids, int len) {
    // Two stack buffers ping-pong the chain while it stays short (almost
    // always); a pair of heap buffers takes over only past that.
    std::uint32_t bufa[kStack], bufb[kStack];
    const std::uint32_t* cur = ids;
    std::size_t clen = static_cast<std::size_t>(len);
    while (clen != 0) {
      const std::uint32_t pivot = cur[0];
      const std::uint64_t o = owner_[pivot];
      if (o == kNone) {
        claim(pivot, cur, clen);
        return;
      }
      const std::uint32_t* b = arena_.data() + (o >> kLenBits);
      const std::size_t blen = static_cast<std::size_t>(o & kLenMask);
      // both columns start with the shared pivot, which cancels
      const std::size_t need = clen + blen - 2;
      std::uint32_t* dst;
      if (need <= kStack) {
        dst = (cur == bufa) ? bufb : bufa;
      } else {
        auto& hv = (cur == heap_a_.data()) ? heap_b_ : heap_a_;
        if (hv.size() < need) hv.resize(need);
        dst = hv.data();
      }
      clen = merge_into(dst, cur + 1, clen - 1, b + 1, blen - 1);
      cur = dst;
    }
  }

  std::size_t rank() const { return rank_; }

  /// Hints the owner-word load of an upcoming column's pivot row.  Callers
  /// batch a few columns, hint them all, then add them: the random owner
  /// lookups overlap instead of serializing on memory latency.
  void prefetch(std::uint32_t row) const {
#if defined(__GNUC__) || defined(__clang__)
    __builtin_prefetch(owner_.data() + row);
#endif
  }

 private:
  // Owner word per row: arena offset of the claiming column (upper bits) and
  // its length (lower bits).  Claimed columns are immutable, so the packed
  // view never needs updating.
  static constexpr unsigned kLenBits = 24;
  static constexpr std::uint64_t kLenMask = (std::uint64_t{1} << kLenBits) - 1;
  static constexpr std::uint64_t kNone = ~std::uint64_t{0};
  static constexpr std::size_t kStack = 192;

  void claim(std::uint32_t pivot, const std::uint32_t* col, std::size_t len) {
    if (len >= (std::size_t{1} << kLenBits))
      fail(ErrorKind::DomainViolation,
           "boundary reduction column exceeds the supported length");
    owner_[pivot] =
        (static_cast<std::uint64_t>(arena_.size()) << kLenBits) | len;
    arena_.insert(arena_.end(), col, col + len);
    ++rank_;
  }

  /// Symmetric difference of two strictly descending id lists.
  static std::size_t merge_into(std::uint32_t* dst, const std::uint32_t* a,
                                std::size_t alen, const std::uint32_t* b,
                                std::size_t blen) {
    const std::uint32_t* ae = a + alen;
    const std::uint32_t* be = b + blen;
    std::uint32_t* o = dst;
    while (a != ae && b != be) {
      if (*a == *b) {
        ++a;
        ++b;
      } else if (*a > *b) {
        *o++ = *a++;
      } else {
        *o++ = *b++;
      }
    }
    while (a != ae) *o++ = *a++;
    while (b != be) *o++ = *b++;
    return static_cast<std::size_t>(o - dst);
  }

  std::vector<std::uint64_t> owner_;
  std::vector<std::uint32_t> arena_;
  std::vector<std::uint32_t> heap_a_, heap_b_;
  std::size_t rank_ = 0;
};

/// CSR lookup of lexicographically sorted edges by first vertex.
struct EdgeIndex {
  std::vector<std::size_t> off;  // vertex_count + 1
  const std::uint32_t* pairs = nullptr;
  std::size_t edge_count = 0;

  EdgeIndex(const std::vector<std::uint32_t>& edges, std::uint32_t n) {
    pairs = edges.data();
    edge_count = edges.size() / 2;
    off.assign(n + 1, 0);
    for (std::size_t e = 0; e < edge_count; ++e) ++off[edges[2 * e] + 1];
    for (std::uint32_t u = 0; u < n; ++u) off[u + 1] += off[u];
  }

  /// Index of edge (u, v) with u < v, or npos.
  std::size_t id(std::uint32_t u, std::uint32_t v) const {
    std::size_t lo = off[u], hi = off[u + 1];
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (pairs[2 * mid + 1] < v)
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo < off[u + 1] && pairs[2 * lo + 1] == v) return lo;
    return npos;
  }
  static constexpr std::size_t npos = ~std::size_t{0};
};

/// CSR lookup of lexicographically sorted triangles grouped by their (u, v)
/// edge prefix.
struct TriIndex {
  std::vector<std::size_t> begin;  // edge_count + 1
  const std::uint32_t* tris = nullptr;
  std::size_t tri_count = 0;

  TriIndex(const std::vector<std::uint32_t>& triangles, const EdgeIndex& ei) {
    tris = triangles.data();
    tri_count = triangles.size() / 3;
    begin.assign(ei.edge_count + 1, 0);
    std::size_t run = EdgeIndex::npos;  // id of the current (u, v) run
    for (std::size_t t = 0; t < tri_count; ++t) {
      if (t == 0 || triangles[3 * t] != triangles[3 * t - 3] ||
          triangles[3 * t + 1] != triangles[3 * t - 2]) {
        run = ei.id(triangles[3 * t], triangles[3 * t + 1]);
        if (run == EdgeIndex::npos)
          fail(ErrorKind::DomainViolation,
               "complex is not downward closed: triangle misses an edge");
      }
      ++begin[run + 1];
    }
    for (std::size_t e = 0; e < ei.edge_count; ++e) begin[e + 1] += begin[e];
  }

  std::size_t id(std::size_t edge, std::uint32_t w) const {
    if (edge == EdgeIndex::npos) return EdgeIndex::npos;
    std::size_t lo = begin[edge], hi = begin[edge + 1];
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (tris[3 * mid + 2] < w)
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo < begin[edge + 1] && tris[3 * lo + 2] == w) return lo;
    return EdgeIndex::npos;
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// intersect
// ---------------------------------------------------------------------------

IntersectResult intersect(const std::vector<Ellipsoid>& ellipsoids, Scalar tol,
                          std::uint32_t max_iters) {
  if (ellipsoids.empty())
    fail(ErrorKind::DomainViolation, "intersect requires a non-empty family");
  if (!(tol > 0))
    fail(ErrorKind::DomainViolation, "intersect requires tol > 0");
  if (max_iters == 0) max_iters = 1;
  const int n = static_cast<int>(ellipsoids.front().frame.ambient_dim());
  EllPack fe;
  fe.reserve(ellipsoids.size(), n);
  for (const Ellipsoid& e : ellipsoids) fe.add(e);
  std::vector<std::uint32_t> family(ellipsoids.size());
  for (std::size_t i = 0; i < family.size(); ++i)
    family[i] = static_cast<std::uint32_t>(i);

  ApScratch scratch;
  IntersectResult res;
  res.status = ap_run(fe, family.data(), static_cast<int>(family.size()),
                      tol, max_iters, scratch, &res.gap, &res.iterations);
  if (res.status == IntersectStatus::Witness)
    res.witness = Eigen::Map<const Vector>(scratch.x.data(), n);
  return res;
}

// ---------------------------------------------------------------------------
// build_nerve
// ---------------------------------------------------------------------------

BuiltNerve build_nerve(const EllipsoidCover& cover, int max_dim, Scalar tol,
                       unsigned workers) {
  if (max_dim < 1)
    fail(ErrorKind::DomainViolation, "build_nerve requires max_dim >= 1");
  if (max_dim > 3)
    fail(ErrorKind::DomainViolation,
         "build_nerve supports max_dim <= 3 (enough for Betti numbers "
         "through dimension 2)");
  if (!(tol > 0)) fail(ErrorKind::DomainViolation, "build_nerve requires tol > 0");
  const std::size_t N = cover.size();
  if (N == 0) fail(ErrorKind::DomainViolation, "build_nerve: empty cover");
  if (workers == 0) {
    workers = std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
  }

  EllPack ells;
  ells.reserve(N, static_cast<int>(cover.ellipsoid(0).frame.ambient_dim()));
  for (std::size_t i = 0; i < N; ++i) ells.add(cover.ellipsoid(i));
  const int n = ells.n;
  const std::uint32_t max_iters = 10000;

  BuiltNerve out;
  out.complex.vertex_count = static_cast<std::uint32_t>(N);
  out.complex.max_dim = max_dim;
  out.complex.cells.assign(static_cast<std::size_t>(max_dim) + 1, {});
  out.complex.cells[0].resize(N);
  for (std::size_t i = 0; i < N; ++i)
    out.complex.cells[0][i] = static_cast<std::uint32_t>(i);

  const Scalar a =
      std::isfinite(cover.tau)
          ? std::sqrt(cover.tau * cover.p + cover.p * cover.p)
          : kInfinity;

  // --- candidate pairs: ellipsoids fit in balls of radius a about their
  // centers, so centers further apart than 2a can be skipped outright.
  std::vector<std::uint32_t> cand;
  std::vector<std::size_t> grp;  // first candidate slot per leading vertex
  grp.reserve(N + 1);
  for (std::uint32_t i = 0; i < N; ++i) {
    grp.push_back(cand.size() / 2);
    const double* ci = ells.origin(i);
    for (std::uint32_t j = i + 1; j < N; ++j) {
      const double* cj = ells.origin(j);
      double d2 = 0;
      for (int r = 0; r < n; ++r) {
        const double d = ci[r] - cj[r];
        d2 += d * d;
      }
      if (!std::isfinite(a) || d2 <= 4 * a * a * (1 + 1e-12)) {
        cand.push_back(i);
        cand.push_back(j);
      }
    }
  }
  grp.push_back(cand.size() / 2);

  // --- edge phase ------------------------------------------------------
  // Chunks are aligned to leading-vertex groups so the running witness of
  // the current vertex never straddles a chunk: the result is identical for
  // every worker count.
  struct EdgeOut {
    std::vector<std::uint32_t> edges;     // flattened pairs
    std::vector<double> witness;          // n per edge
    std::vector<std::uint32_t> warnings;  // flattened pairs
  };
  std::vector<EdgeOut> eout(workers);
  run_chunked(N, workers, [&](unsigned chunk, std::size_t glo, std::size_t ghi) {
    ApScratch scratch;
    std::vector<double> pt(n);
    EdgeOut& o = eout[chunk];
    std::uint32_t fam[2];
    constexpr std::size_t npos = ~std::size_t{0};
    for (std::size_t g = glo; g < ghi; ++g) {
      std::size_t prev = npos;  // offset of this vertex's last witness
      for (std::size_t c = grp[g]; c < grp[g + 1]; ++c) {
        const std::uint32_t i = cand[2 * c], j = cand[2 * c + 1];
        const double* cand_pt = nullptr;
        // the previous confirmed partner's witness already lies in E_i
        if (prev != npos &&
            ells.form(j, o.witness.data() + prev) <= 1.0 + tol)
          cand_pt = o.witness.data() + prev;
        if (!cand_pt) {
          const double* ci = ells.origin(i);
          const double* cj = ells.origin(j);
          for (int r = 0; r < n; ++r) pt[r] = 0.5 * (ci[r] + cj[r]);
          if (std::max(ells.form(i, pt.data()), ells.form(j, pt.data())) <=
              1.0 + tol)
            cand_pt = pt.data();
        }
        if (!cand_pt) {
          if (support_separated(ells, i, j)) continue;
          fam[0] = i;
          fam[1] = j;
          const double* seed =
              prev != npos ? o.witness.data() + prev : pt.data();
          const IntersectStatus st = ap_run(ells, fam, 2, tol,
                                            max_iters, scratch, nullptr,
                                            nullptr, seed, a);
          if (st == IntersectStatus::Inconclusive) {
            o.warnings.push_back(i);
            o.warnings.push_back(j);
            continue;
          }
          if (st == IntersectStatus::Disjoint) continue;
          cand_pt = scratch.x.data();
        }
        if (cand_pt != pt.data())
          std::memcpy(pt.data(), cand_pt, sizeof(double) * n);
        o.edges.push_back(i);
        o.edges.push_back(j);
        prev = o.witness.size();
        o.witness.insert(o.witness.end(), pt.begin(), pt.end());
      }
    }
  });

  std::vector<std::uint32_t>& edges = out.complex.cells[1];
  std::vector<double> edge_wit;
  for (unsigned c = 0; c < workers; ++c) {
    edges.insert(edges.end(), eout[c].edges.begin(), eout[c].edges.end());
    edge_wit.insert(edge_wit.end(), eout[c].witness.begin(), eout[c].witness.end());
    for (std::size_t k = 0; k + 1 < eout[c].warnings.size(); k += 2)
      out.warnings.push_back({eout[c].warnings[k], eout[c].warnings[k + 1]});
  }
  eout.clear();
  const std::size_t E = edges.size() / 2;

  if (max_dim == 1) return out;

  // adjacency lists (sorted by construction: edges are lex sorted)
  std::vector<std::vector<std::uint32_t>> adj(N);
  for (std::size_t e = 0; e < E; ++e) {
    adj[edges[2 * e]].push_back(edges[2 * e + 1]);
    adj[edges[2 * e + 1]].push_back(edges[2 * e]);
  }
  for (auto& v : adj) std::sort(v.begin(), v.end());
  EdgeIndex eidx(edges, static_cast<std::uint32_t>(N));

  // --- triangle phase ----------------------------------------------------
  // tri_w[e] collects confirmed third vertices of edge e (ascending); the
  // witness of triangle (u, v, w) sits at tri_wit[e] offset pos * n.
  std::vector<std::vector<std::uint32_t>> tri_w(E);
  std::vector<std::vector<double>> tri_wit(E);
  struct TriWarn {
    std::vector<std::uint32_t> warnings;  // flattened triples
  };
  std::vector<TriWarn> twarn(workers);
  run_chunked(E, workers, [&](unsigned chunk, std::size_t lo, std::size_t hi) {
    ApScratch scratch;
    std::vector<double> pt(n);
    std::uint32_t fam[3];
    constexpr std::size_t npos = ~std::size_t{0};
    for (std::size_t e = lo; e < hi; ++e) {
      const std::uint32_t u = edges[2 * e], v = edges[2 * e + 1];
      const auto& au = adj[u];
      const auto& av = adj[v];
      std::size_t iu = 0, iv = 0;
      std::size_t prev = npos;  // offset of this edge's last triangle witness
      // third vertices ascend, so edge ids (u, w) and (v, w) are found by
      // monotone walks over the two sorted edge ranges instead of searches
      std::size_t wu = eidx.off[u], wv = eidx.off[v];
      const std::size_t wu_end = eidx.off[u + 1], wv_end = eidx.off[v + 1];
      while (iu < au.size() && iv < av.size()) {
        if (au[iu] < av[iv]) {
          ++iu;
        } else if (av[iv] < au[iu]) {
          ++iv;
        } else {
          const std::uint32_t w = au[iu];
          ++iu;
          ++iv;
          if (w <= v) continue;
          // quick witnesses: a stored witness already lies in two (or all
          // but one) of the ellipsoids, so one extra form evaluation
          // settles acceptance.
          const double* cand_pt = nullptr;
          if (prev != npos &&
              ells.form(w, tri_wit[e].data() + prev) <= 1.0 + tol)
            cand_pt = tri_wit[e].data() + prev;
          const double* ew_uv = edge_wit.data() + e * n;
          if (!cand_pt && ells.form(w, ew_uv) <= 1.0 + tol) cand_pt = ew_uv;
          while (wu < wu_end && eidx.pairs[2 * wu + 1] < w) ++wu;
          while (wv < wv_end && eidx.pairs[2 * wv + 1] < w) ++wv;
          const std::size_t euw =
              (wu < wu_end && eidx.pairs[2 * wu + 1] == w) ? wu
                                                           : EdgeIndex::npos;
          const std::size_t evw =
              (wv < wv_end && eidx.pairs[2 * wv + 1] == w) ? wv
                                                           : EdgeIndex::npos;
          const double* ew_uw =
              euw != EdgeIndex::npos ? edge_wit.data() + euw * n : nullptr;
          const double* ew_vw =
              evw != EdgeIndex::npos ? edge_wit.data() + evw * n : nullptr;
          if (!cand_pt && ew_uw && ells.form(v, ew_uw) <= 1.0 + tol)
            cand_pt = ew_uw;
          if (!cand_pt && ew_vw && ells.form(u, ew_vw) <= 1.0 + tol)
            cand_pt = ew_vw;
          const double* seed = nullptr;
          if (!cand_pt && ew_uw && ew_vw) {
            // centroid of the three pairwise witnesses: an excellent guess
            // for the triple intersection, and the warm start otherwise
            for (int r = 0; r < n; ++r)
              pt[r] = (ew_uv[r] + ew_uw[r] + ew_vw[r]) / 3.0;
            seed = pt.data();
            if (std::max({ells.form(u, seed), ells.form(v, seed),
                          ells.form(w, seed)}) <= 1.0 + tol)
              cand_pt = seed;
          }
          if (!cand_pt) {
            fam[0] = u;
            fam[1] = v;
            fam[2] = w;
            if (seed && farkas_reject(ells, fam, 3, a, tol, seed))
              continue;
            const double* start =
                prev != npos ? tri_wit[e].data() + prev : seed;
            const IntersectStatus st = ap_run(ells, fam, 3, tol,
                                              max_iters, scratch, nullptr,
                                              nullptr, start, a);
            if (st == IntersectStatus::Inconclusive) {
              twarn[chunk].warnings.insert(twarn[chunk].warnings.end(), {u, v, w});
              continue;
            }
            if (st == IntersectStatus::Disjoint) continue;
            cand_pt = scratch.x.data();
          }
          // copy before insert: cand_pt may point into tri_wit[e] itself
          if (cand_pt != pt.data())
            std::memcpy(pt.data(), cand_pt, sizeof(double) * n);
          tri_w[e].push_back(w);
          prev = tri_wit[e].size();
          tri_wit[e].insert(tri_wit[e].end(), pt.begin(), pt.end());
        }
      }
    }
  });
  for (unsigned c = 0; c < workers; ++c)
    for (std::size_t k = 0; k + 2 < twarn[c].warnings.size() + 1; k += 3)
      out.warnings.push_back({twarn[c].warnings[k], twarn[c].warnings[k + 1],
                              twarn[c].warnings[k + 2]});
  twarn.clear();

  std::vector<std::uint32_t>& tris = out.complex.cells[2];
  {
    std::size_t total = 0;
    for (std::size_t e = 0; e < E; ++e) total += tri_w[e].size();
    tris.reserve(3 * total);
  }
  for (std::size_t e = 0; e < E; ++e)
    for (std::uint32_t w : tri_w[e]) {
      tris.push_back(edges[2 * e]);
      tris.push_back(edges[2 * e + 1]);
      tris.push_back(w);
    }

  if (max_dim == 2) return out;

  // --- tetrahedron phase ---------------------------------------------------
  // Candidates (u, v, w, z) require all four triangular faces confirmed;
  // z is drawn from the intersection of the three per-edge lists.  Confirmed
  // quadruples land in fixed-size blocks: top-dimension lists reach billions
  // of bytes, and blocks avoid the doubling reallocations of one flat vector
  // (and let the final gather release memory as it copies).
  constexpr std::size_t kTetBlock = std::size_t{1} << 22;  // ids per block
  struct TetOut {
    std::vector<std::vector<std::uint32_t>> blocks;  // flattened quadruples
    std::vector<std::uint32_t> warnings;             // flattened quadruples
  };
  std::vector<TetOut> tout(workers);
  run_chunked(E, workers, [&](unsigned chunk, std::size_t lo, std::size_t hi) {
    ApScratch scratch;
    std::vector<double> pt(n);
    double prev_q[8];
    std::uint32_t fam[4];
    TetOut& o = tout[chunk];
    std::uint32_t* tcur = nullptr;  // write head into the current block
    std::uint32_t* tend = nullptr;
    for (std::size_t e = lo; e < hi; ++e) {
      const std::uint32_t u = edges[2 * e], v = edges[2 * e + 1];
      const auto& luv = tri_w[e];
      // confirmed third vertices ascend: monotone edge-range walks again
      std::size_t wu = eidx.off[u], wv = eidx.off[v];
      const std::size_t wu_end = eidx.off[u + 1], wv_end = eidx.off[v + 1];
      for (std::size_t pos = 0; pos < luv.size(); ++pos) {
        const std::uint32_t w = luv[pos];
        while (wu < wu_end && eidx.pairs[2 * wu + 1] < w) ++wu;
        while (wv < wv_end && eidx.pairs[2 * wv + 1] < w) ++wv;
        if (wu >= wu_end || eidx.pairs[2 * wu + 1] != w || wv >= wv_end ||
            eidx.pairs[2 * wv + 1] != w)
          continue;
        const std::size_t euw = wu;
        const std::size_t evw = wv;
        const auto& l2 = tri_w[euw];
        const auto& l3 = tri_w[evw];
        bool prev_ok = false;  // prev_q: this triangle's last tet witness
        std::size_t i1 = pos + 1, i2 = 0, i3 = 0;
        while (i1 < luv.size() && i2 < l2.size() && i3 < l3.size()) {
          const std::uint32_t z1 = luv[i1], z2 = l2[i2], z3 = l3[i3];
          const std::uint32_t zmax = std::max({z1, z2, z3});
          if (z1 < zmax) {
            ++i1;
            continue;
          }
          if (z2 < zmax) {
            ++i2;
            continue;
          }
          if (z3 < zmax) {
            ++i3;
            continue;
          }
          const std::uint32_t z = zmax;  // common value
          // face witnesses each lie in three of the four ellipsoids
          const double* cand_pt = nullptr;
          const double* f_uvw = tri_wit[e].data() + pos * n;
          const double* f_uvz = tri_wit[e].data() + i1 * n;
          const double* f_uwz = tri_wit[euw].data() + i2 * n;
          const double* f_vwz = tri_wit[evw].data() + i3 * n;
          if (prev_ok && ells.form(z, prev_q) <= 1.0 + tol) cand_pt = prev_q;
          if (!cand_pt && ells.form(z, f_uvw) <= 1.0 + tol) cand_pt = f_uvw;
          if (!cand_pt && ells.form(w, f_uvz) <= 1.0 + tol) cand_pt = f_uvz;
          if (!cand_pt && ells.form(v, f_uwz) <= 1.0 + tol) cand_pt = f_uwz;
          if (!cand_pt && ells.form(u, f_vwz) <= 1.0 + tol) cand_pt = f_vwz;
          if (!cand_pt) {
            for (int r = 0; r < n; ++r)
              pt[r] = (f_uvw[r] + f_uvz[r] + f_uwz[r] + f_vwz[r]) / 4.0;
            if (std::max({ells.form(u, pt.data()), ells.form(v, pt.data()),
                          ells.form(w, pt.data()), ells.form(z, pt.data())}) <=
                1.0 + tol)
              cand_pt = pt.data();
          }
          bool accept = cand_pt != nullptr;
          if (!accept) {
            // no pre-rejectors here: with all four faces confirmed, disjoint
            // quadruples are rare and the in-run probes already settle them
            fam[0] = u;
            fam[1] = v;
            fam[2] = w;
            fam[3] = z;
            const double* start = prev_ok ? prev_q : pt.data();
            const IntersectStatus st = ap_run(ells, fam, 4, tol,
                                              max_iters, scratch, nullptr,
                                              nullptr, start, a);
            if (st == IntersectStatus::Inconclusive)
              o.warnings.insert(o.warnings.end(), {u, v, w, z});
            accept = (st == IntersectStatus::Witness);
            if (accept) cand_pt = scratch.x.data();
          }
          if (accept) {
            if (tcur == tend) {
              o.blocks.emplace_back(kTetBlock);
              tcur = o.blocks.back().data();
              tend = tcur + kTetBlock;
            }
            tcur[0] = u;
            tcur[1] = v;
            tcur[2] = w;
            tcur[3] = z;
            tcur += 4;
            if (cand_pt != prev_q)
              std::memcpy(prev_q, cand_pt, sizeof(double) * n);
            prev_ok = true;
          }
          ++i1;
          ++i2;
          ++i3;
        }
      }
    }
    if (!o.blocks.empty())
      o.blocks.back().resize(kTetBlock -
                             static_cast<std::size_t>(tend - tcur));
  });
  // Gather into the top-dimension list.  The reservation is address space
  // only; pages get touched as blocks are copied in and each block is freed
  // right after, so resident memory stays near the final list size.
  std::vector<std::uint32_t>& tets = out.complex.cells[3];
  {
    std::size_t total = 0;
    for (unsigned c = 0; c < workers; ++c)
      for (const auto& b : tout[c].blocks) total += b.size();
    tets.reserve(total);
  }
  for (unsigned c = 0; c < workers; ++c) {
    for (auto& b : tout[c].blocks) {
      tets.insert(tets.end(), b.begin(), b.end());
      std::vector<std::uint32_t>().swap(b);
    }
    tout[c].blocks.clear();
    for (std::size_t k = 0; k + 3 < tout[c].warnings.size() + 1; k += 4)
      out.warnings.push_back({tout[c].warnings[k], tout[c].warnings[k + 1],
                              tout[c].warnings[k + 2], tout[c].warnings[k + 3]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// betti
// ---------------------------------------------------------------------------

std::vector<std::size_t> betti(const SimplicialComplex& K, int up_to_dim) {
  if (up_to_dim < 0)
    fail(ErrorKind::DomainViolation, "betti requires up_to_dim >= 0");
  for (int k = 4; k < static_cast<int>(K.cells.size()); ++k)
    if (K.count(k) > 0 && up_to_dim >= 3)
      fail(ErrorKind::DomainViolation,
           "betti supports complexes of dimension <= 3");

  const std::size_t C0 = K.count(0), C1 = K.count(1), C2 = K.count(2),
                    C3 = K.count(3);
  if (C0 != K.vertex_count)
    fail(ErrorKind::DomainViolation, "betti: vertex cells must list every vertex");

  // beta_0 and rank of the degree-1 boundary via union-find.
  DisjointSet dsu(K.vertex_count);
  const std::vector<std::uint32_t>& edges =
      K.cells.size() > 1 ? K.cells[1] : K.cells[0];
  if (C1 > 0)
    for (std::size_t e = 0; e < C1; ++e) dsu.unite(edges[2 * e], edges[2 * e + 1]);
  std::size_t components = 0;
  for (std::uint32_t v = 0; v < K.vertex_count; ++v)
    if (dsu.find(v) == v) ++components;
  const std::size_t r1 = C0 - components;

  std::size_t r2 = 0, r3 = 0;
  constexpr int kBatch = 16;  // columns hinted ahead of reduction
  if (C2 > 0) {
    EdgeIndex eidx(K.cells[1], K.vertex_count);
    Gf2Reducer red(C1);
    const std::vector<std::uint32_t>& tris = K.cells[2];
    // Lex order groups triangles into runs of constant (u, v) with the third
    // vertex strictly ascending, so the face edge ids advance monotonically
    // and pointer walks replace per-triangle binary searches.
    std::size_t euv_run = 0;
    std::size_t wu = 0, wu_end = 0, wv = 0, wv_end = 0;
    std::uint32_t bcol[kBatch][3];
    int bn = 0;
    auto flush2 = [&] {
      for (int i = 0; i < bn; ++i) red.prefetch(bcol[i][0]);
      for (int i = 0; i < bn; ++i) red.add_column(bcol[i], 3);
      bn = 0;
    };
    for (std::size_t t = 0; t < C2; ++t) {
      const std::uint32_t u = tris[3 * t], v = tris[3 * t + 1], w = tris[3 * t + 2];
      if (t == 0 || u != tris[3 * t - 3] || v != tris[3 * t - 2]) {
        euv_run = eidx.id(u, v);
        if (euv_run == EdgeIndex::npos)
          fail(ErrorKind::DomainViolation,
               "complex is not downward closed: triangle misses an edge");
        wu = eidx.off[u];
        wu_end = eidx.off[u + 1];
        wv = eidx.off[v];
        wv_end = eidx.off[v + 1];
      }
      while (wu < wu_end && eidx.pairs[2 * wu + 1] < w) ++wu;
      while (wv < wv_end && eidx.pairs[2 * wv + 1] < w) ++wv;
      if (wu >= wu_end || eidx.pairs[2 * wu + 1] != w || wv >= wv_end ||
          eidx.pairs[2 * wv + 1] != w)
        fail(ErrorKind::DomainViolation,
             "complex is not downward closed: triangle misses an edge");
      // descending: (v,w) > (u,w) > (u,v) in the lexicographic edge order
      bcol[bn][0] = static_cast<std::uint32_t>(wv);
      bcol[bn][1] = static_cast<std::uint32_t>(wu);
      bcol[bn][2] = static_cast<std::uint32_t>(euv_run);
      if (++bn == kBatch) flush2();
    }
    flush2();
    r2 = red.rank();

    if (C3 > 0) {
      TriIndex tidx(K.cells[2], eidx);
      Gf2Reducer red3(C2);
      std::uint32_t bcol4[kBatch][4];
      int bn4 = 0;
      auto flush3 = [&] {
        for (int i = 0; i < bn4; ++i) red3.prefetch(bcol4[i][0]);
        for (int i = 0; i < bn4; ++i) red3.add_column(bcol4[i], 4);
        bn4 = 0;
      };
      const std::vector<std::uint32_t>& tets = K.cells[3];
      // Lex order groups tetrahedra into runs of constant (u, v, w) with the
      // fourth vertex strictly ascending, so face ids inside a run can be
      // found by monotone pointer walks instead of per-tet binary searches.
      const std::uint32_t* T = tidx.tris;
      auto seek = [&](std::size_t lo, std::size_t hi, std::uint32_t key) {
        while (lo < hi) {
          const std::size_t mid = (lo + hi) / 2;
          if (T[3 * mid + 2] < key)
            lo = mid + 1;
          else
            hi = mid;
        }
        return lo;
      };
      auto walk = [&](std::size_t& p, std::size_t end, std::uint32_t key) {
        while (p < end && T[3 * p + 2] < key) ++p;
        return (p < end && T[3 * p + 2] == key) ? p : EdgeIndex::npos;
      };
      std::uint32_t pu = 0, pv = 0, pw = 0;
      bool have_uv = false, have_uvw = false;
      std::size_t euv = 0, euw = 0, evw = 0, f_uvw = 0;
      std::size_t p_wface = 0, p_uv = 0, p_uw = 0, p_vw = 0;
      for (std::size_t q = 0; q < C3; ++q) {
        const std::uint32_t u = tets[4 * q], v = tets[4 * q + 1],
                            w = tets[4 * q + 2], z = tets[4 * q + 3];
        if (!have_uv || u != pu || v != pv) {
          euv = eidx.id(u, v);
          if (euv == EdgeIndex::npos)
            fail(ErrorKind::DomainViolation,
                 "complex is not downward closed: tetrahedron misses a face");
          p_wface = tidx.begin[euv];
          have_uv = true;
          have_uvw = false;
        }
        if (!have_uvw || w != pw || u != pu || v != pv) {
          pu = u;
          pv = v;
          pw = w;
          have_uvw = true;
          euw = eidx.id(u, w);
          evw = eidx.id(v, w);
          if (euw == EdgeIndex::npos || evw == EdgeIndex::npos)
            fail(ErrorKind::DomainViolation,
                 "complex is not downward closed: tetrahedron misses a face");
          f_uvw = walk(p_wface, tidx.begin[euv + 1], w);
          if (f_uvw == EdgeIndex::npos)
            fail(ErrorKind::DomainViolation,
                 "complex is not downward closed: tetrahedron misses a face");
          p_uv = seek(p_wface + 1, tidx.begin[euv + 1], z);
          p_uw = seek(tidx.begin[euw], tidx.begin[euw + 1], z);
          p_vw = seek(tidx.begin[evw], tidx.begin[evw + 1], z);
        }
        const std::size_t f_uvz = walk(p_uv, tidx.begin[euv + 1], z);
        const std::size_t f_uwz = walk(p_uw, tidx.begin[euw + 1], z);
        const std::size_t f_vwz = walk(p_vw, tidx.begin[evw + 1], z);
        if (f_vwz == EdgeIndex::npos || f_uwz == EdgeIndex::npos ||
            f_uvz == EdgeIndex::npos)
          fail(ErrorKind::DomainViolation,
               "complex is not downward closed: tetrahedron misses a face");
        bcol4[bn4][0] = static_cast<std::uint32_t>(f_vwz);
        bcol4[bn4][1] = static_cast<std::uint32_t>(f_uwz);
        bcol4[bn4][2] = static_cast<std::uint32_t>(f_uvz);
        bcol4[bn4][3] = static_cast<std::uint32_t>(f_uvw);
        if (++bn4 == kBatch) flush3();
      }
      flush3();
      r3 = red3.rank();
    }
  }

  std::vector<std::size_t> beta(static_cast<std::size_t>(up_to_dim) + 1, 0);
  beta[0] = components;
  if (up_to_dim >= 1) beta[1] = C1 - r1 - r2;
  if (up_to_dim >= 2) beta[2] = C2 - r2 - r3;
  if (up_to_dim >= 3) beta[3] = C3 - r3;  // no 4-cells by the guard above
  return beta;
}

// ---------------------------------------------------------------------------
// validate_complex
// ---------------------------------------------------------------------------

void validate_complex(const SimplicialComplex& K) {
  for (int k = 0; k < static_cast<int>(K.cells.size()); ++k) {
    const std::size_t width = static_cast<std::size_t>(k) + 1;
    const auto& cells = K.cells[k];
    if (cells.size() % width != 0)
      fail(ErrorKind::DomainViolation, "cell list length not a tuple multiple");
    const std::size_t count = cells.size() / width;
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t* tup = cells.data() + i * width;
      for (std::size_t j = 0; j + 1 < width; ++j)
        if (tup[j] >= tup[j + 1])
          fail(ErrorKind::DomainViolation, "simplex tuple not strictly increasing");
      if (tup[width - 1] >= K.vertex_count)
        fail(ErrorKind::DomainViolation, "vertex index out of range");
      if (i > 0) {
        const std::uint32_t* prev = cells.data() + (i - 1) * width;
        if (!std::lexicographical_compare(prev, prev + width, tup, tup + width))
          fail(ErrorKind::DomainViolation, "cell list not strictly lex-sorted");
      }
      if (k > 0) {
        // every facet must be present in dimension k-1
        std::vector<std::uint32_t> face(width - 1);
        for (std::size_t drop = 0; drop < width; ++drop) {
          std::size_t idx = 0;
          for (std::size_t j = 0; j < width; ++j)
            if (j != drop) face[idx++] = tup[j];
          const auto& lower = K.cells[k - 1];
          const std::size_t lw = width - 1;
          const std::size_t lc = lower.size() / lw;
          bool found = false;
          std::size_t lo = 0, hi = lc;
          while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            const std::uint32_t* cand = lower.data() + mid * lw;
            if (std::lexicographical_compare(cand, cand + lw, face.data(),
                                             face.data() + lw))
              lo = mid + 1;
            else
              hi = mid;
          }
          if (lo < lc &&
              std::equal(face.begin(), face.end(), lower.data() + lo * lw))
            found = true;
          if (!found)
            fail(ErrorKind::DomainViolation, "complex is not downward closed");
        }
      }
    }
  }
}

}  // namespace ellcover
