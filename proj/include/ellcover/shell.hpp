#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ellcover/geometry.hpp"
#include "ellcover/nerve.hpp"

namespace ellcover {

/// On-disk description of a tangent-framed sample of a submanifold.  The
/// JSON layout is
///   {
///     "ambient_dim": n, "manifold_dim": m, "tau": .., "kappa": ..,
///     "p": ..,                                // optional (cover files)
///     "points": [
///       {"x": [..n..],
///        "tangent": [[..n..] x m],            // orthonormal rows
///        "normal": [[..n..] x (n-m)]},        // optional, completed if absent
///       ...
///     ]
///   }
/// Missing normal bases are completed deterministically by Gram-Schmidt
/// against the canonical basis.  Every frame is validated to 1e-8.
struct SampleFile {
  int ambient_dim = 0;
  int manifold_dim = 0;
  Scalar tau = 0;
  Scalar kappa = 0;
  std::vector<TangentFrame> points;
  std::optional<Scalar> p;  ///< ellipsoid size when the file doubles as cover

  std::size_t size() const { return points.size(); }
};

/// Serialization round-trips bit-exactly: write(read(text)) == text for
/// files this library wrote.
std::string sample_to_json(const SampleFile& file);
/// Throws ErrorKind::Usage with position diagnostics on malformed JSON and
/// on structurally invalid documents (missing fields, ragged arrays).
SampleFile sample_from_json(const std::string& text);

void write_sample(const SampleFile& file, const std::string& path);
SampleFile read_sample(const std::string& path);

/// Parses "circle:R", "sphere:R", "torus:R:r" or "affine:m:n".
AnalyticManifold parse_model(const std::string& text);

/// Farthest-point subsample of a dense parameter grid of the model, stopping
/// once the grid is covered within target_kappa.  The emitted kappa is the
/// measured covering radius of the chosen points with respect to that grid.
/// resolution <= 0 picks ceil(2.5 * major_extent / target_kappa) per
/// intrinsic dimension.  Unbounded models and grids beyond 4e6 points are
/// rejected (DomainViolation / ResolutionLimit).
SampleFile generate_sample(const AnalyticManifold& model, Scalar target_kappa,
                           int resolution = 0);

/// Interprets the sample as an ellipsoid cover with normal semi-axis p.
/// p <= 0 falls back to the file's stored p, if any.
EllipsoidCover cover_from_sample(const SampleFile& file, Scalar p = 0);

/// Command-line entry point (subcommands: sample, bounds, certify, nerve,
/// retract).  Returns the process exit code: 0 success, 2 usage errors,
/// 1 every other failure.  Exposed so tests can drive it in-process.
int run_cli(int argc, const char* const* argv);

}  // namespace ellcover
