#include "ellcover/shell.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ellcover/bounds.hpp"
#include "ellcover/certifier.hpp"
#include "ellcover/errors.hpp"
#include "ellcover/retraction.hpp"

namespace ellcover {
namespace {

using nlohmann::json;

std::string fmt(Scalar x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Usage, where + ": malformed JSON: " + e.what());
  }
}

const json& field(const json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end())
    fail(ErrorKind::Usage, where + ": missing field '" + key + "'");
  return *it;
}

Scalar num_field(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number())
    fail(ErrorKind::Usage, where + ": field '" + key + "' must be a number");
  return v.get<Scalar>();
}

int int_field(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number_integer())
    fail(ErrorKind::Usage, where + ": field '" + key + "' must be an integer");
  return v.get<int>();
}

Vector vector_from_json(const json& v, int n, const std::string& where) {
  if (!v.is_array() || static_cast<int>(v.size()) != n)
    fail(ErrorKind::Usage, where + ": expected an array of " +
                               std::to_string(n) + " numbers");
  Vector out(n);
  for (int i = 0; i < n; ++i) {
    if (!v[i].is_number())
      fail(ErrorKind::Usage, where + ": entry " + std::to_string(i) +
                                 " is not a number");
    out[i] = v[i].get<Scalar>();
  }
  return out;
}

json vector_to_json(const Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

/// Rows of a basis matrix (columns are the basis vectors).
json basis_to_json(const Matrix& B) {
  json rows = json::array();
  for (int j = 0; j < B.cols(); ++j) rows.push_back(vector_to_json(B.col(j)));
  return rows;
}

Matrix basis_from_json(const json& rows, int n, int count,
                       const std::string& where) {
  if (!rows.is_array() || static_cast<int>(rows.size()) != count)
    fail(ErrorKind::Usage, where + ": expected " + std::to_string(count) +
                               " basis vectors");
  Matrix B(n, count);
  for (int j = 0; j < count; ++j)
    B.col(j) = vector_from_json(rows[j], n,
                                where + "[" + std::to_string(j) + "]");
  return B;
}

/// Deterministic Gram-Schmidt completion of an orthonormal tangent basis to
/// a full frame; the appended columns become the normal basis.
Matrix complete_normals(const Matrix& tangent) {
  const int n = static_cast<int>(tangent.rows());
  const int m = static_cast<int>(tangent.cols());
  Matrix basis(n, n);
  basis.leftCols(m) = tangent;
  int have = m;
  for (int k = 0; k < n && have < n; ++k) {
    Vector v = Vector::Zero(n);
    v[k] = 1;
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j < have; ++j) v -= basis.col(j).dot(v) * basis.col(j);
    if (v.norm() > 1e-8) basis.col(have++) = v / v.norm();
  }
  if (have < n)
    fail(ErrorKind::FrameInvalid,
         "could not complete the tangent basis to a full frame");
  return basis.rightCols(n - m);
}

}  // namespace

std::string sample_to_json(const SampleFile& file) {
  json j;
  j["ambient_dim"] = file.ambient_dim;
  j["manifold_dim"] = file.manifold_dim;
  j["tau"] = std::isfinite(file.tau) ? json(file.tau) : json(nullptr);
  j["kappa"] = file.kappa;
  if (file.p) j["p"] = *file.p;
  json pts = json::array();
  for (const TangentFrame& f : file.points) {
    json e;
    e["x"] = vector_to_json(f.origin);
    e["tangent"] = basis_to_json(f.tangent_basis);
    e["normal"] = basis_to_json(f.normal_basis);
    pts.push_back(std::move(e));
  }
  j["points"] = std::move(pts);
  return j.dump(1) + "\n";
}

SampleFile sample_from_json(const std::string& text) {
  const json j = parse_json(text, "sample");
  if (!j.is_object())
    fail(ErrorKind::Usage, "sample: top-level JSON value must be an object");
  SampleFile sf;
  sf.ambient_dim = int_field(j, "ambient_dim", "sample");
  sf.manifold_dim = int_field(j, "manifold_dim", "sample");
  if (sf.ambient_dim < 1 || sf.manifold_dim < 1 ||
      sf.manifold_dim > sf.ambient_dim)
    fail(ErrorKind::Usage,
         "sample: need 1 <= manifold_dim <= ambient_dim");
  const json& tau = field(j, "tau", "sample");
  if (tau.is_null())
    sf.tau = kInfinity;
  else if (tau.is_number())
    sf.tau = tau.get<Scalar>();
  else
    fail(ErrorKind::Usage, "sample: field 'tau' must be a number or null");
  if (!(sf.tau > 0))
    fail(ErrorKind::Usage, "sample: tau must be positive");
  sf.kappa = num_field(j, "kappa", "sample");
  if (!(sf.kappa >= 0))
    fail(ErrorKind::Usage, "sample: kappa must be nonnegative");
  if (j.contains("p")) {
    const Scalar p = num_field(j, "p", "sample");
    if (!(p > 0)) fail(ErrorKind::Usage, "sample: p must be positive");
    sf.p = p;
  }
  const json& pts = field(j, "points", "sample");
  if (!pts.is_array())
    fail(ErrorKind::Usage, "sample: field 'points' must be an array");
  const int n = sf.ambient_dim, m = sf.manifold_dim;
  sf.points.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::string where = "sample: points[" + std::to_string(i) + "]";
    const json& e = pts[i];
    if (!e.is_object()) fail(ErrorKind::Usage, where + ": must be an object");
    TangentFrame f;
    f.origin = vector_from_json(field(e, "x", where), n, where + ".x");
    f.tangent_basis =
        basis_from_json(field(e, "tangent", where), n, m, where + ".tangent");
    if (e.contains("normal"))
      f.normal_basis =
          basis_from_json(e["normal"], n, n - m, where + ".normal");
    else
      f.normal_basis = complete_normals(f.tangent_basis);
    f.require_valid(1e-8);
    sf.points.push_back(std::move(f));
  }
  return sf;
}

void write_sample(const SampleFile& file, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
  out << sample_to_json(file);
  if (!out) fail(ErrorKind::Io, "failed while writing '" + path + "'");
}

SampleFile read_sample(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return sample_from_json(buf.str());
}

AnalyticManifold parse_model(const std::string& text) {
  std::vector<std::string> parts;
  std::string cur;
  for (const char c : text) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  const auto want = [&](std::size_t k) {
    if (parts.size() != k + 1)
      fail(ErrorKind::Usage, "model '" + text + "': expected " +
                                 std::to_string(k) + " parameter(s)");
  };
  const auto number = [&](std::size_t i) {
    try {
      std::size_t used = 0;
      const Scalar v = std::stod(parts[i], &used);
      if (used != parts[i].size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::Usage,
           "model '" + text + "': '" + parts[i] + "' is not a number");
    }
  };
  const auto integer = [&](std::size_t i) {
    const Scalar v = number(i);
    if (v != std::floor(v))
      fail(ErrorKind::Usage,
           "model '" + text + "': '" + parts[i] + "' is not an integer");
    return static_cast<int>(v);
  };
  if (parts[0] == "circle") {
    want(1);
    return AnalyticManifold::circle(number(1));
  }
  if (parts[0] == "sphere") {
    want(1);
    return AnalyticManifold::sphere(number(1));
  }
  if (parts[0] == "torus") {
    want(2);
    return AnalyticManifold::torus(number(1), number(2));
  }
  if (parts[0] == "affine") {
    want(2);
    return AnalyticManifold::affine(integer(1), integer(2));
  }
  fail(ErrorKind::Usage,
       "unknown model '" + parts[0] +
           "' (expected circle, sphere, torus or affine)");
}

SampleFile generate_sample(const AnalyticManifold& model, Scalar target_kappa,
                           int resolution) {
  if (!(target_kappa > 0))
    fail(ErrorKind::UndefinedInput, "target kappa must be positive");
  if (!std::isfinite(model.major_extent()))
    fail(ErrorKind::DomainViolation,
         "farthest-point sampling needs a bounded model");
  int res = resolution;
  if (res <= 0) {
    res = static_cast<int>(
        std::ceil(2.5 * model.major_extent() / target_kappa));
    res = std::max(res, 8);
  }
  const double grid_points = std::pow(static_cast<double>(res),
                                      model.intrinsic_dim());
  if (grid_points > 4e6)
    fail(ErrorKind::ResolutionLimit,
         "reference grid would need " + std::to_string(grid_points) +
             " points; lower the resolution or raise kappa");

  const std::vector<Vector> grid = model.parameter_grid(res);
  const std::size_t G = grid.size();
  std::vector<Scalar> mind(G);
  std::vector<std::size_t> chosen{0};
  for (std::size_t i = 0; i < G; ++i) mind[i] = (grid[i] - grid[0]).norm();
  Scalar radius = 0;
  while (true) {
    std::size_t imax = 0;
    for (std::size_t i = 1; i < G; ++i)
      if (mind[i] > mind[imax]) imax = i;
    radius = mind[imax];
    if (radius <= target_kappa) break;
    chosen.push_back(imax);
    for (std::size_t i = 0; i < G; ++i)
      mind[i] = std::min(mind[i], (grid[i] - grid[imax]).norm());
  }

  SampleFile sf;
  sf.ambient_dim = model.ambient_dim();
  sf.manifold_dim = model.intrinsic_dim();
  sf.tau = model.reach();
  sf.kappa = radius;
  sf.points.reserve(chosen.size());
  for (const std::size_t idx : chosen) sf.points.push_back(model.frame_at(grid[idx]));
  return sf;
}

EllipsoidCover cover_from_sample(const SampleFile& file, Scalar p) {
  const Scalar pp = p > 0 ? p : file.p.value_or(0);
  if (!(pp > 0))
    fail(ErrorKind::Usage,
         "cover needs a positive p (pass --p or store it in the file)");
  EllipsoidCover cover;
  cover.tau = file.tau;
  cover.p = pp;
  cover.kappa = file.kappa;
  cover.samples = file.points;
  return cover;
}

// ---------------------------------------------------------------------------
// Command line

namespace {

unsigned env_workers() {
  const char* e = std::getenv("ELLCOVER_WORKERS");
  if (!e) return 0;
  char* end = nullptr;
  const unsigned long v = std::strtoul(e, &end, 10);
  if (end == e || *end != '\0') return 0;
  return static_cast<unsigned>(v);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) fail(ErrorKind::Io, "failed while writing '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void cmd_sample(const std::string& model_str, Scalar kappa, int resolution,
                const std::string& out_path) {
  const SampleFile sf =
      generate_sample(parse_model(model_str), kappa, resolution);
  write_sample(sf, out_path);
  std::printf("points=%zu\n", sf.size());
  std::printf("kappa=%s\n", fmt(sf.kappa).c_str());
}

void cmd_bounds(Scalar kappa, Scalar tau, Scalar p) {
  const DensityReport rep = density_report(kappa, tau);
  const bool ok = p > 0 ? density_check(kappa, tau, p) : rep.density_ok;
  std::printf("density_ok=%s\n", ok ? "true" : "false");
  std::printf("lambda=%s\n", fmt(rep.lambda).c_str());
  std::printf("p_window=[%s, %s]\n", fmt(rep.p_window_lo).c_str(),
              fmt(rep.p_window_hi).c_str());
  std::printf("coverage_radius_at_window_top=%s\n",
              fmt(rep.coverage_radius_at_Mp).c_str());
}

void cmd_certify(const CertifierParams& params, const std::string& out_path) {
  const CertificateReport rep = grid_certify(params);
  json j;
  j["delta"] = rep.delta;
  j["L"] = rep.L;
  j["lattice_dims"] = rep.lattice_dims;
  j["points_evaluated"] = rep.points_evaluated;
  j["min_v"] = rep.min_v;
  j["argmin"] = {{"alpha", rep.argmin.alpha},
                 {"sigma", rep.argmin.sigma},
                 {"p", rep.argmin.p},
                 {"chi", rep.argmin.chi}};
  j["argmin_index"] = rep.argmin_index;
  j["certified"] = rep.certified;
  j["wall_time"] = rep.wall_time;
  if (!out_path.empty()) write_text(out_path, j.dump(1) + "\n");
  std::printf("points_evaluated=%llu\n",
              static_cast<unsigned long long>(rep.points_evaluated));
  std::printf("min_v=%s\n", fmt(rep.min_v).c_str());
  std::printf("margin=%s\n", fmt(rep.L * rep.delta).c_str());
  std::printf("certified=%s\n", rep.certified ? "true" : "false");
}

void cmd_nerve(const std::string& cover_path, Scalar p, int max_dim,
               Scalar tol, unsigned workers, const std::string& out_path) {
  const SampleFile sf = read_sample(cover_path);
  const EllipsoidCover cover = cover_from_sample(sf, p);
  const BuiltNerve built = build_nerve(cover, max_dim, tol, workers);
  const std::vector<std::size_t> b = betti(built.complex, max_dim);

  json j;
  j["vertices"] = built.complex.vertex_count;
  json simplices = json::array();
  for (int k = 1; k <= built.complex.max_dim; ++k) {
    const auto& flat = built.complex.cells[static_cast<std::size_t>(k)];
    const std::size_t w = static_cast<std::size_t>(k) + 1;
    for (std::size_t i = 0; i + w <= flat.size(); i += w) {
      json cell = json::array();
      for (std::size_t r = 0; r < w; ++r) cell.push_back(flat[i + r]);
      simplices.push_back(std::move(cell));
    }
  }
  j["simplices"] = std::move(simplices);
  j["betti"] = b;
  j["warnings"] = built.warnings;
  write_text(out_path, j.dump(1) + "\n");

  std::printf("vertices=%u\n", built.complex.vertex_count);
  for (int k = 1; k <= built.complex.max_dim; ++k)
    std::printf("cells_dim%d=%zu\n", k, built.complex.count(k));
  std::string bs;
  for (const std::size_t v : b)
    bs += (bs.empty() ? "" : ", ") + std::to_string(v);
  std::printf("betti=[%s]\n", bs.c_str());
  std::printf("warnings=%zu\n", built.warnings.size());
}

void cmd_retract(const std::string& cover_path, const std::string& model_str,
                 Scalar p, const std::string& starts_path, int count,
                 std::uint64_t seed, Scalar t, Scalar grid_h, Scalar rk_step,
                 Scalar lambda_ovr, Scalar eps_ovr,
                 const std::string& out_path) {
  if (!(t >= 0) || !(t <= 1))
    fail(ErrorKind::Usage, "--t must lie in [0, 1]");
  const SampleFile sf = read_sample(cover_path);
  const EllipsoidCover cover = cover_from_sample(sf, p);
  const AnalyticManifold model = parse_model(model_str);
  RetractionConfig cfg = make_retraction_config(
      cover, model, lambda_ovr, eps_ovr, grid_h, rk_step);
  const Retraction retr(std::move(cfg));

  std::vector<Vector> starts;
  if (!starts_path.empty()) {
    const json js = parse_json(read_text(starts_path), "starts");
    const json& arr = js.is_object() ? field(js, "starts", "starts") : js;
    if (!arr.is_array())
      fail(ErrorKind::Usage, "starts: expected an array of points");
    for (std::size_t i = 0; i < arr.size(); ++i)
      starts.push_back(vector_from_json(arr[i], model.ambient_dim(),
                                        "starts[" + std::to_string(i) + "]"));
  } else {
    // Deterministic pseudo-random starts inside the union.
    std::mt19937_64 rng(seed);
    std::normal_distribution<Scalar> gauss;
    std::uniform_real_distribution<Scalar> unit(0.0, 1.0);
    const int n = model.ambient_dim();
    const Scalar a = retr.config().cover.ellipsoid(0).tangent_semiaxis();
    const Scalar b = retr.config().cover.p;
    while (static_cast<int>(starts.size()) < count) {
      const std::size_t s = rng() % retr.config().cover.size();
      Vector z(n);
      for (int i = 0; i < n; ++i) z[i] = gauss(rng);
      z *= 0.9 * std::pow(unit(rng), 1.0 / n) / z.norm();
      const TangentFrame& f = retr.config().cover.samples[s];
      const int m = static_cast<int>(f.tangent_basis.cols());
      Vector x = f.origin + f.tangent_basis * (a * z.head(m)) +
                 f.normal_basis * (b * z.tail(n - m));
      if (model.distance(x) > 1e-6) starts.push_back(std::move(x));
    }
  }

  const AnalyticManifold& mdl = retr.config().model;
  const Scalar w = retr.config().w;
  const int nsamp = 33;
  json traces = json::array();
  Scalar worst_final = 0;
  for (const Vector& x0 : starts) {
    const Scalar d0 = mdl.distance(x0);
    json samples = json::array();
    Vector cur = x0;
    Scalar flowed = 0;
    Vector pos = x0;
    for (int k = 0; k < nsamp; ++k) {
      const Scalar zeta = t * k / (nsamp - 1);
      const Scalar s1 = std::min<Scalar>(1.0, 2 * zeta);
      const Scalar s2 = std::max<Scalar>(0.0, 2 * zeta - 1);
      if (d0 > w) {
        const Scalar target = s1 * (d0 - w);
        if (target > flowed + 1e-15) {
          cur = retr.flow(cur, target - flowed);
          flowed = target;
        }
      }
      pos = s2 > 0 ? Vector((1 - s2) * cur + s2 * mdl.project(cur)) : cur;
      samples.push_back({{"t", zeta},
                         {"x", vector_to_json(pos)},
                         {"d", mdl.distance(pos)}});
    }
    worst_final = std::max(worst_final, mdl.distance(pos));
    traces.push_back({{"start", vector_to_json(x0)},
                      {"samples", std::move(samples)},
                      {"terminal", vector_to_json(pos)}});
  }
  json j;
  j["t_final"] = t;
  j["traces"] = std::move(traces);
  write_text(out_path, j.dump(1) + "\n");
  std::printf("traces=%zu\n", starts.size());
  std::printf("max_terminal_distance=%s\n", fmt(worst_final).c_str());
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  try {
    CLI::App app{
        "ellcover: tangent-ellipsoid covers of sampled submanifolds -- "
        "sampling, density bounds, certified positivity scan, nerve homology "
        "and the deformation retraction"};
    app.require_subcommand(1);

    // sample
    auto* sc_sample = app.add_subcommand(
        "sample", "farthest-point sample of an analytic model");
    std::string s_model, s_out;
    Scalar s_kappa = 0;
    int s_res = 0;
    sc_sample->add_option("--model", s_model,
                          "circle:R | sphere:R | torus:R:r | affine:m:n")
        ->required();
    sc_sample->add_option("--kappa", s_kappa, "target covering radius")
        ->required();
    sc_sample->add_option("--out", s_out, "output sample JSON")->required();
    sc_sample->add_option("--resolution", s_res,
                          "reference grid resolution (0 = automatic)");
    sc_sample->callback([&] { cmd_sample(s_model, s_kappa, s_res, s_out); });

    // bounds
    auto* sc_bounds = app.add_subcommand(
        "bounds", "density criterion and admissible parameter window");
    Scalar b_kappa = 0, b_tau = 0, b_p = 0;
    sc_bounds->add_option("--kappa", b_kappa, "sample covering radius")
        ->required();
    sc_bounds->add_option("--tau", b_tau, "reach")->required();
    sc_bounds->add_option("--p", b_p,
                          "evaluate the criterion at this thickening");
    sc_bounds->callback([&] { cmd_bounds(b_kappa, b_tau, b_p); });

    // certify
    auto* sc_certify = app.add_subcommand(
        "certify", "lattice scan certifying positivity of the margin v");
    CertifierParams cp;
    cp.workers = env_workers();
    std::string c_out, c_region = "CTilde";
    sc_certify->add_option("--delta", cp.delta, "lattice half-step")
        ->required();
    sc_certify->add_option("--mp", cp.m_p, "window bottom (default 0.5)");
    sc_certify->add_option("--Mp", cp.M_p, "window top (default 0.96)");
    sc_certify->add_option("--kappa-off", cp.kappa_off,
                           "density offset (default 0.55)");
    sc_certify->add_option("--region", c_region, "C or CTilde");
    sc_certify->add_option("--workers", cp.workers, "worker threads");
    sc_certify->add_option("--resume", cp.resume_path, "resume checkpoint");
    sc_certify->add_option("--checkpoint", cp.checkpoint_path,
                           "checkpoint output path");
    sc_certify->add_option("--out", c_out, "report JSON path");
    sc_certify->callback([&] {
      if (c_region == "C")
        cp.region = Region::C;
      else if (c_region == "CTilde")
        cp.region = Region::CTilde;
      else
        fail(ErrorKind::Usage, "--region must be C or CTilde");
      cmd_certify(cp, c_out);
    });

    // nerve
    auto* sc_nerve = app.add_subcommand(
        "nerve", "nerve complex and Betti numbers of an ellipsoid cover");
    std::string n_cover, n_out;
    Scalar n_p = 0, n_tol = 1e-9;
    int n_maxdim = 2;
    unsigned n_workers = env_workers();
    sc_nerve->add_option("--cover", n_cover, "sample/cover JSON")->required();
    sc_nerve->add_option("--p", n_p, "thickening (overrides the file's p)");
    sc_nerve->add_option("--max-dim", n_maxdim, "top simplex dimension (1-3)");
    sc_nerve->add_option("--tol", n_tol, "intersection tolerance");
    sc_nerve->add_option("--workers", n_workers, "worker threads");
    sc_nerve->add_option("--out", n_out, "complex JSON path")->required();
    sc_nerve->callback(
        [&] { cmd_nerve(n_cover, n_p, n_maxdim, n_tol, n_workers, n_out); });

    // retract
    auto* sc_retract = app.add_subcommand(
        "retract", "deformation-retraction trajectories of cover points");
    std::string r_cover, r_model, r_starts, r_out;
    Scalar r_p = 0, r_t = 1.0, r_grid_h = 0, r_rk = 0, r_lambda = 0,
           r_eps = 0;
    int r_count = 8;
    std::uint64_t r_seed = 0;
    sc_retract->add_option("--cover", r_cover, "sample/cover JSON")
        ->required();
    sc_retract->add_option("--model", r_model, "analytic model string")
        ->required();
    sc_retract->add_option("--p", r_p, "thickening (overrides the file's p)");
    sc_retract->add_option("--starts", r_starts,
                           "JSON with start points (default: random)");
    sc_retract->add_option("--count", r_count,
                           "number of random starts when --starts is absent");
    sc_retract->add_option("--seed", r_seed, "random-start seed");
    sc_retract->add_option("--t", r_t, "retraction time in [0, 1]");
    sc_retract->add_option("--grid-h", r_grid_h, "set-distance grid step");
    sc_retract->add_option("--rk-step", r_rk, "integrator step");
    sc_retract->add_option("--lambda", r_lambda, "coverage threshold override");
    sc_retract->add_option("--epsilon", r_eps, "containment margin override");
    sc_retract->add_option("--out", r_out, "trace JSON path")->required();
    sc_retract->callback([&] {
      cmd_retract(r_cover, r_model, r_p, r_starts, r_count, r_seed, r_t,
                  r_grid_h, r_rk, r_lambda, r_eps, r_out);
    });

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == ErrorKind::Usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace ellcover
