#pragma once

#include <stdexcept>
#include <string>

namespace remember {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched dimensions or lengths between operands.
struct ShapeError : Error {
  using Error::Error;
};

// Input is structurally fine but semantically invalid (zero vector,
// empty corpus, out-of-range class index, bad enum token, ...).
struct DomainError : Error {
  using Error::Error;
};

// NaN/Inf encountered where a finite value is required.
struct NumericError : Error {
  using Error::Error;
};

// Operation sequencing problem (e.g. backward without a forward cache).
struct StateError : Error {
  using Error::Error;
};

// Filesystem-level failure: missing file, unreadable, write failure.
struct IoError : Error {
  using Error::Error;
};

// File exists and was read, but its content is malformed or inconsistent
// (bad magic, truncated blob, duplicate ids, dimension mismatch, ...).
struct LoadError : Error {
  using Error::Error;
};

// Invalid or incomplete configuration for the requested operation.
struct ConfigError : Error {
  using Error::Error;
};

// Lookup by id/key found nothing.
struct LookupError : Error {
  using Error::Error;
};

}  // namespace remember
