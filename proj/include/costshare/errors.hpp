#pragma once

#include <stdexcept>
#include <string>

namespace costshare {

/// Base for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Cost data that is not a strict metric (asymmetric, negative, zero between
/// distinct vertices, triangle violation, disconnected graph).
struct MetricError : Error {
  using Error::Error;
};

/// Bad user input: malformed files, unknown generator, impossible options.
struct ConfigError : Error {
  using Error::Error;
};

/// Input the routing model cannot express, e.g. co-located agents that would
/// pick different paths.
struct ModelError : Error {
  using Error::Error;
};

/// A tree-follow move that is not legal in the current tree.
struct InvalidMove : Error {
  using Error::Error;
};

/// An engine invariant failed. Seeing one of these means a bug, not bad input.
struct InvariantViolation : Error {
  using Error::Error;
};

/// A routing tree left the four charging classes.
struct ClosureViolation : InvariantViolation {
  using InvariantViolation::InvariantViolation;
};

}  // namespace costshare
