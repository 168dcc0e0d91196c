#include "ellcover/certifier.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <thread>
#include <vector>

namespace ellcover {

namespace {

constexpr Scalar kPi = std::numbers::pi;

void require_window(Scalar m_p, Scalar M_p) {
  if (!(0 < m_p) || !(m_p < M_p) || !(M_p < 1)) {
    fail(ErrorKind::InfeasibleParameters, "need 0 < m_p < M_p < 1");
  }
}

Scalar alpha_box_max(Scalar M_p) { return std::atan(std::sqrt(M_p + M_p * M_p)); }

}  // namespace

bool in_region(const Configuration& cfg, Region region, Scalar m_p, Scalar M_p) {
  require_window(m_p, M_p);
  if (!(cfg.alpha >= 0) || !(cfg.alpha <= alpha_box_max(M_p))) return false;
  if (!(cfg.sigma >= 0) || !(cfg.sigma <= kPi)) return false;
  if (!(cfg.p >= m_p) || !(cfg.p <= M_p)) return false;
  if (!(cfg.chi >= 0) || !(cfg.chi <= kPi / 2)) return false;
  const Scalar t = std::tan(cfg.alpha);
  const Scalar cap = (region == Region::C) ? cfg.p + cfg.p * cfg.p
                                           : 2 * cfg.p + cfg.p * cfg.p;
  return t * t <= cap;
}

Eigen::Vector2d point_X(Scalar p, Scalar chi) {
  return {std::sqrt(p + p * p) * std::cos(chi), -p * std::sin(chi)};
}

Eigen::Vector2d arc_center(Scalar alpha) {
  return {2 * std::sin(alpha), 1 - 2 * std::cos(alpha)};
}

Eigen::Vector2d point_S(Scalar alpha, Scalar sigma) {
  return {2 * std::sin(alpha) - std::sin(alpha - sigma),
          1 - 2 * std::cos(alpha) + std::cos(alpha - sigma)};
}

Scalar v_rotated(const Configuration& cfg) {
  const Eigen::Vector2d X = point_X(cfg.p, cfg.chi);
  const Eigen::Vector2d S = point_S(cfg.alpha, cfg.sigma);
  const Scalar c = std::cos(cfg.alpha - cfg.sigma);
  const Scalar s = std::sin(cfg.alpha - cfg.sigma);
  const Scalar wx = X.x() - S.x(), wy = X.y() - S.y();
  const Scalar u = c * wx + s * wy;   // tangential component at S
  const Scalar q = -s * wx + c * wy;  // normal component at S
  return cfg.p * cfg.p * (cfg.p + 1) - u * u * cfg.p - q * q * (cfg.p + 1);
}

Scalar v_expanded(const Configuration& cfg) {
  const Eigen::Vector2d X = point_X(cfg.p, cfg.chi);
  const Eigen::Vector2d S = point_S(cfg.alpha, cfg.sigma);
  const Scalar c = std::cos(cfg.alpha - cfg.sigma);
  const Scalar s = std::sin(cfg.alpha - cfg.sigma);
  const Scalar wx = X.x() - S.x(), wy = X.y() - S.y();
  const Scalar n = -s * wx + c * wy;
  return cfg.p * cfg.p * (cfg.p + 1) - (wx * wx + wy * wy) * cfg.p - n * n;
}

Scalar v(const Configuration& cfg) {
  if (!in_region(cfg, Region::CTilde)) {
    fail(ErrorKind::RegionViolation, "configuration outside the scanned region");
  }
  const Scalar a = v_rotated(cfg);
  const Scalar b = v_expanded(cfg);
  if (!(std::abs(a - b) <= 1e-12 * std::max<Scalar>(1, std::abs(a)))) {
    fail(ErrorKind::UndefinedInput, "dual-route evaluation of v disagreed");
  }
  return a;
}

Scalar lipschitz_L(Scalar m_p, Scalar M_p) {
  require_window(m_p, M_p);
  return 36 + 46 * M_p + 16 * M_p * M_p +
         2 * (2 + M_p) * (1 + M_p) *
             ((1 + 2 * m_p) / (2 * std::sqrt(m_p + m_p * m_p)) +
              std::sqrt(M_p + M_p * M_p));
}

Scalar kappa_eff(Scalar p, Scalar kappa_off) {
  if (!(p > 0) || !(kappa_off >= 0)) {
    fail(ErrorKind::InfeasibleParameters, "kappa_eff requires p > 0, kappa_off >= 0");
  }
  const Scalar radicand = 2 * p * (std::sqrt(p + 2) - 1) - kappa_off;
  if (!(radicand > 0)) {
    fail(ErrorKind::InfeasibleParameters,
         "kappa offset leaves no admissible proximity radius at p = " +
             std::to_string(p));
  }
  return std::sqrt(radicand);
}

TwoArcNearest two_arc_nearest(const Configuration& cfg) {
  const Scalar alpha = cfg.alpha, sigma = cfg.sigma;
  const Eigen::Vector2d X = point_X(cfg.p, cfg.chi);
  const Eigen::Vector2d J{std::sin(alpha), 1 - std::cos(alpha)};

  // First arc: unit circle about (0, 1), angle t in [0, alpha] measured from
  // the downward direction; X always has angle t_X in [0, pi/2).
  const Scalar tX = std::atan2(X.x(), 1 - X.y());
  const Scalar r1 = std::sqrt(X.x() * X.x() + (X.y() - 1) * (X.y() - 1));
  Eigen::Vector2d y1;
  Scalar dist1, base1;  // base1: curve length from y1 to the junction
  if (tX <= alpha) {
    y1 = Eigen::Vector2d{X.x() / r1, 1 + (X.y() - 1) / r1};
    dist1 = std::abs(r1 - 1);
    base1 = alpha - tX;
  } else {
    y1 = J;
    dist1 = (X - J).norm();
    base1 = 0;
  }

  // Second arc: unit circle about C, angle s in [0, sigma]; radial projection
  // is valid only if the projected angle lands inside the span, otherwise the
  // nearer endpoint (junction or S) by Euclidean distance wins.
  const Eigen::Vector2d C = arc_center(alpha);
  const Eigen::Vector2d e = X - C;
  const Scalar re = e.norm();
  Eigen::Vector2d y2;
  Scalar dist2, arc2;
  bool radial = false;
  if (re > 1e-12) {
    const Scalar sX = alpha - std::atan2(-e.x(), e.y());
    if (sX >= 0 && sX <= sigma) {
      y2 = C + e / re;
      dist2 = std::abs(re - 1);
      arc2 = sigma - sX;
      radial = true;
    }
  }
  if (!radial) {
    const Eigen::Vector2d S = point_S(alpha, sigma);
    const Scalar dS = (X - S).norm();
    const Scalar dJ = (X - J).norm();
    if (dS <= dJ) {
      y2 = S;
      dist2 = dS;
      arc2 = 0;
    } else {
      y2 = J;
      dist2 = dJ;
      arc2 = sigma;
    }
  }

  TwoArcNearest out;
  if (dist2 <= dist1) {  // ties resolve to the second arc (shorter curve path)
    out.y = y2;
    out.distance = dist2;
    out.arc_distance = arc2;
    out.on_second_arc = true;
  } else {
    out.y = y1;
    out.distance = dist1;
    out.arc_distance = base1 + sigma;
    out.on_second_arc = false;
  }
  return out;
}

bool mandatory(const Configuration& cfg, Scalar kappa_off) {
  const TwoArcNearest n = two_arc_nearest(cfg);
  const Scalar form = n.y.x() * n.y.x() / (cfg.p + cfg.p * cfg.p) +
                      n.y.y() * n.y.y() / (cfg.p * cfg.p);
  // A curve point strictly inside the base ellipsoid already covers X through
  // the sample at the origin; only the remaining configurations need v > 0.
  if (form < 1) return false;
  return n.arc_distance <= kappa_eff(cfg.p, kappa_off);
}

// ---------------------------------------------------------------------------
// Lattice scan
// ---------------------------------------------------------------------------

namespace {

struct Axis {
  Scalar lo = 0, hi = 0, step = 0;
  std::uint32_t k = 0;
  Scalar center(std::uint32_t j) const { return lo + (j + Scalar(0.5)) * step; }
};

Axis make_axis(Scalar lo, Scalar hi, Scalar delta) {
  Axis a;
  a.lo = lo;
  a.hi = hi;
  a.k = static_cast<std::uint32_t>(std::ceil((hi - lo) / (2 * delta)));
  a.step = (hi - lo) / a.k;
  return a;
}

struct WorkerSlot {
  std::uint64_t next_task = 0;
  std::uint64_t evals = 0;
  Scalar min_v = kInfinity;
  std::array<std::uint32_t, 4> arg{};  // alpha, sigma, p, chi indices
  std::uint8_t has_min = 0;
};

bool index_less(const std::array<std::uint32_t, 4>& a,
                const std::array<std::uint32_t, 4>& b) {
  return a < b;
}

struct CheckpointHeader {
  Scalar delta, m_p, M_p, kappa_off;
  std::uint8_t region;
  std::uint32_t workers;
  std::array<std::uint32_t, 4> dims;
  std::uint64_t task_count;
};

constexpr char kMagic[4] = {'E', 'L', 'C', 'V'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void get(std::ifstream& is, T& value) {
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
}

void write_checkpoint(const std::string& path, const CheckpointHeader& h,
                      const std::vector<WorkerSlot>& slots) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot write checkpoint: " + tmp);
    os.write(kMagic, 4);
    put(os, kVersion);
    put(os, h.delta);
    put(os, h.m_p);
    put(os, h.M_p);
    put(os, h.kappa_off);
    put(os, h.region);
    put(os, h.workers);
    for (auto d : h.dims) put(os, d);
    put(os, h.task_count);
    for (const auto& s : slots) {
      put(os, s.next_task);
      put(os, s.evals);
      put(os, s.min_v);
      for (auto a : s.arg) put(os, a);
      put(os, s.has_min);
    }
    if (!os) fail(ErrorKind::Io, "checkpoint write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Io, "checkpoint rename failed: " + ec.message());
}

bool read_checkpoint(const std::string& path, const CheckpointHeader& expect,
                     std::vector<WorkerSlot>& slots) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;  // no file: fresh start
  char magic[4];
  is.read(magic, 4);
  std::uint32_t version = 0;
  get(is, version);
  if (!is || std::memcmp(magic, kMagic, 4) != 0 || version != kVersion) {
    fail(ErrorKind::CheckpointMismatch, "unrecognized checkpoint format: " + path);
  }
  CheckpointHeader h{};
  get(is, h.delta);
  get(is, h.m_p);
  get(is, h.M_p);
  get(is, h.kappa_off);
  get(is, h.region);
  get(is, h.workers);
  for (auto& d : h.dims) get(is, d);
  get(is, h.task_count);
  if (!is || h.delta != expect.delta || h.m_p != expect.m_p ||
      h.M_p != expect.M_p || h.kappa_off != expect.kappa_off ||
      h.region != expect.region || h.workers != expect.workers ||
      h.dims != expect.dims || h.task_count != expect.task_count) {
    fail(ErrorKind::CheckpointMismatch,
         "checkpoint does not match the requested scan: " + path);
  }
  slots.assign(expect.workers, WorkerSlot{});
  for (auto& s : slots) {
    get(is, s.next_task);
    get(is, s.evals);
    get(is, s.min_v);
    for (auto& a : s.arg) get(is, a);
    get(is, s.has_min);
  }
  if (!is) {
    fail(ErrorKind::CheckpointMismatch, "checkpoint truncated: " + path);
  }
  return true;
}

}  // namespace

CertificateReport grid_certify(const CertifierParams& P) {
  if (!(P.delta > 0) || !(P.delta <= 0.01)) {
    fail(ErrorKind::CoverageDelta,
         "lattice half-step must lie in (0, 0.01] for the covering argument");
  }
  require_window(P.m_p, P.M_p);
  if (P.checkpoint_every == 0) {
    fail(ErrorKind::InfeasibleParameters, "checkpoint_every must be positive");
  }
  const unsigned W =
      P.workers ? P.workers : std::max(1u, std::thread::hardware_concurrency());

  const auto t0 = std::chrono::steady_clock::now();

  const Axis ax = make_axis(0, alpha_box_max(P.M_p), P.delta);
  const Axis sx = make_axis(0, kPi, P.delta);
  const Axis px = make_axis(P.m_p, P.M_p, P.delta);
  const Axis xx = make_axis(0, kPi / 2, P.delta);

  // Per-axis tables (shared read-only by all workers).
  std::vector<Scalar> av(ax.k), sa(ax.k), ca(ax.k), tan2a(ax.k);
  for (std::uint32_t i = 0; i < ax.k; ++i) {
    av[i] = ax.center(i);
    sa[i] = std::sin(av[i]);
    ca[i] = std::cos(av[i]);
    const Scalar t = std::tan(av[i]);
    tan2a[i] = t * t;
  }
  std::vector<Scalar> sv(sx.k), ssn(sx.k), scs(sx.k);
  for (std::uint32_t i = 0; i < sx.k; ++i) {
    sv[i] = sx.center(i);
    ssn[i] = std::sin(sv[i]);
    scs[i] = std::cos(sv[i]);
  }
  std::vector<Scalar> pv(px.k), pa2(px.k), sqrt_pa2(px.k), inva2(px.k),
      invb2(px.k), p2p1(px.k), kap(px.k), tan2cap(px.k);
  for (std::uint32_t i = 0; i < px.k; ++i) {
    const Scalar p = px.center(i);
    pv[i] = p;
    pa2[i] = p + p * p;
    sqrt_pa2[i] = std::sqrt(pa2[i]);
    inva2[i] = 1 / pa2[i];
    invb2[i] = 1 / (p * p);
    p2p1[i] = p * p * (p + 1);
    kap[i] = kappa_eff(p, P.kappa_off);
    tan2cap[i] = (P.region == Region::C) ? p + p * p : 2 * p + p * p;
  }
  std::vector<Scalar> xv(xx.k), sxn(xx.k), xcs(xx.k);
  for (std::uint32_t i = 0; i < xx.k; ++i) {
    xv[i] = xx.center(i);
    sxn[i] = std::sin(xv[i]);
    xcs[i] = std::cos(xv[i]);
  }

  // Tasks: feasible (p, alpha) columns; each task runs the full chi x sigma
  // double loop.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> tasks;
  tasks.reserve(static_cast<size_t>(px.k) * ax.k);
  for (std::uint32_t ip = 0; ip < px.k; ++ip) {
    for (std::uint32_t ia = 0; ia < ax.k; ++ia) {
      if (tan2a[ia] <= tan2cap[ip]) tasks.emplace_back(ip, ia);
    }
  }
  const std::uint64_t T = tasks.size();

  CheckpointHeader header{P.delta, P.m_p,
                          P.M_p,   P.kappa_off,
                          static_cast<std::uint8_t>(P.region), W,
                          {ax.k, sx.k, px.k, xx.k},
                          T};

  std::vector<WorkerSlot> slots(W);
  for (unsigned w = 0; w < W; ++w) slots[w].next_task = T * w / W;
  bool resumed = false;
  if (!P.resume_path.empty()) {
    resumed = read_checkpoint(P.resume_path, header, slots);
    if (resumed) {
      for (unsigned w = 0; w < W; ++w) {
        const std::uint64_t lo = T * w / W, hi = T * (w + 1) / W;
        if (slots[w].next_task < lo || slots[w].next_task > hi) {
          fail(ErrorKind::CheckpointMismatch, "checkpoint partition out of range");
        }
      }
    }
  }

  std::mutex mu;
  std::uint64_t evals_since_flush = 0;
  std::uint64_t tasks_done = 0;
  std::atomic<bool> stop{false};

  auto run_worker = [&](unsigned w) {
    const std::uint64_t hi = T * (w + 1) / W;
    WorkerSlot local = slots[w];
    for (std::uint64_t task = local.next_task; task < hi; ++task) {
      if (stop.load(std::memory_order_relaxed)) break;
      const auto [ip, ia] = tasks[task];
      const Scalar p = pv[ip], alpha = av[ia];
      const Scalar san = sa[ia], can = ca[ia];
      const Scalar Cx = 2 * san, Cy = 1 - 2 * can;
      const Scalar Jx = san, Jy = 1 - can;
      const Scalar ia2 = inva2[ip], ib2 = invb2[ip];
      const Scalar formJ = Jx * Jx * ia2 + Jy * Jy * ib2;
      const Scalar pk = kap[ip], pterm = p2p1[ip], p1 = p + 1;
      std::uint64_t task_evals = 0;

      for (std::uint32_t ix = 0; ix < xx.k; ++ix) {
        const Scalar Xx = sqrt_pa2[ip] * xcs[ix];
        const Scalar Xy = -p * sxn[ix];

        // First-arc candidate.
        const Scalar tX = std::atan2(Xx, 1 - Xy);
        Scalar d1sq, form1, base1;
        const Scalar dJx = Xx - Jx, dJy = Xy - Jy;
        const Scalar dJsq = dJx * dJx + dJy * dJy;
        if (tX <= alpha) {
          const Scalar r1 = std::sqrt(Xx * Xx + (Xy - 1) * (Xy - 1));
          const Scalar d1 = r1 - 1;  // r1 >= 1 always (Xy <= 0)
          d1sq = d1 * d1;
          const Scalar y1x = Xx / r1, y1y = 1 + (Xy - 1) / r1;
          form1 = y1x * y1x * ia2 + y1y * y1y * ib2;
          base1 = alpha - tX;
        } else {
          d1sq = dJsq;
          form1 = formJ;
          base1 = 0;
        }

        // Second-arc fixed parts.
        const Scalar ex = Xx - Cx, ey = Xy - Cy;
        const Scalar re = std::sqrt(ex * ex + ey * ey);
        const bool radial_ok = re > 1e-12;
        Scalar sX = 0, dprojsq = 0, formP2 = 0;
        if (radial_ok) {
          sX = alpha - std::atan2(-ex, ey);
          const Scalar dproj = re - 1;
          dprojsq = dproj * dproj;
          const Scalar p2x = Cx + ex / re, p2y = Cy + ey / re;
          formP2 = p2x * p2x * ia2 + p2y * p2y * ib2;
        }

        for (std::uint32_t is = 0; is < sx.k; ++is) {
          const Scalar sig = sv[is];
          const Scalar s_as = san * scs[is] - can * ssn[is];  // sin(alpha-sigma)
          const Scalar c_as = can * scs[is] + san * ssn[is];  // cos(alpha-sigma)
          const Scalar Sx = Cx - s_as, Sy = Cy + c_as;
          const Scalar wx = Xx - Sx, wy = Xy - Sy;

          Scalar d2sq, form2, arc2;
          if (radial_ok && sX >= 0 && sig >= sX) {
            d2sq = dprojsq;
            form2 = formP2;
            arc2 = sig - sX;
          } else {
            const Scalar dSsq = wx * wx + wy * wy;
            if (dSsq <= dJsq) {
              d2sq = dSsq;
              form2 = Sx * Sx * ia2 + Sy * Sy * ib2;
              arc2 = 0;
            } else {
              d2sq = dJsq;
              form2 = formJ;
              arc2 = sig;
            }
          }

          Scalar formY, arcd;
          if (d2sq <= d1sq) {
            formY = form2;
            arcd = arc2;
          } else {
            formY = form1;
            arcd = base1 + sig;
          }

          if (formY >= 1 && arcd <= pk) {
            ++task_evals;
            const Scalar u = c_as * wx + s_as * wy;
            const Scalar q = c_as * wy - s_as * wx;
            const Scalar vv = pterm - u * u * p - q * q * p1;
            if (vv < local.min_v ||
                (vv == local.min_v &&
                 index_less({ia, is, ip, ix}, local.arg))) {
              local.min_v = vv;
              local.arg = {ia, is, ip, ix};
              local.has_min = 1;
            }
          }
        }
      }

      local.evals += task_evals;
      local.next_task = task + 1;
      {
        std::lock_guard<std::mutex> lock(mu);
        slots[w] = local;
        evals_since_flush += task_evals;
        ++tasks_done;
        if (P.stop_after_tasks && tasks_done >= P.stop_after_tasks) {
          stop.store(true, std::memory_order_relaxed);
        }
        if (!P.checkpoint_path.empty() && evals_since_flush >= P.checkpoint_every) {
          write_checkpoint(P.checkpoint_path, header, slots);
          evals_since_flush = 0;
        }
      }
    }
    std::lock_guard<std::mutex> lock(mu);
    slots[w].next_task = std::max(slots[w].next_task, T * w / W);
  };

  if (W == 1) {
    run_worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(W);
    for (unsigned w = 0; w < W; ++w) pool.emplace_back(run_worker, w);
    for (auto& th : pool) th.join();
  }

  if (!P.checkpoint_path.empty()) {
    write_checkpoint(P.checkpoint_path, header, slots);
  }
  if (stop.load()) {
    fail(ErrorKind::Interrupted,
         "scan stopped after " + std::to_string(tasks_done) + " tasks" +
             (P.checkpoint_path.empty() ? " (no checkpoint path; state lost)"
                                        : "; checkpoint written"));
  }

  CertificateReport rep;
  rep.delta = P.delta;
  rep.L = lipschitz_L(P.m_p, P.M_p);
  rep.lattice_dims = {ax.k, sx.k, px.k, xx.k};
  bool any = false;
  for (const auto& s : slots) {
    rep.points_evaluated += s.evals;
    if (!s.has_min) continue;
    if (!any || s.min_v < rep.min_v ||
        (s.min_v == rep.min_v && index_less(s.arg, rep.argmin_index))) {
      rep.min_v = s.min_v;
      rep.argmin_index = s.arg;
      any = true;
    }
  }
  if (!any) {
    fail(ErrorKind::DegenerateScan, "no lattice point was mandatory");
  }
  rep.argmin = Configuration{av[rep.argmin_index[0]], sv[rep.argmin_index[1]],
                             pv[rep.argmin_index[2]], xv[rep.argmin_index[3]]};
  rep.certified = rep.min_v > rep.L * P.delta;
  rep.wall_time =
      std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace ellcover
