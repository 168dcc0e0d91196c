#pragma once

#include <stdexcept>
#include <string>

namespace ellcover {

/// Classifies every failure the library reports by throwing.
/// CLI exit codes: Usage -> 2, everything else -> 1.
enum class ErrorKind {
  FrameInvalid,          ///< tangent/normal frame fails orthonormality checks
  UndefinedInput,        ///< input outside the mathematical domain of an operation
  MedialAxis,            ///< nearest-point projection requested on the medial axis
  WindowViolation,       ///< thickening parameter outside the admissible window
  RegionViolation,       ///< configuration outside the scanned parameter region
  CoverageDelta,         ///< lattice half-step too large for the covering argument
  InfeasibleParameters,  ///< parameter set rejected before any work started
  DegenerateScan,        ///< lattice scan produced no admissible configuration
  CheckpointMismatch,    ///< resume data does not match the requested scan
  DomainViolation,       ///< operation unsupported for this manifold/model
  ContainmentViolation,  ///< flow trajectory left the region that must contain it
  ResolutionLimit,       ///< sampling would exceed the supported grid resolution
  Interrupted,           ///< run stopped early on request (state checkpointed)
  Usage,                 ///< malformed command line
  Io,                    ///< file could not be read, parsed, or written
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace ellcover
