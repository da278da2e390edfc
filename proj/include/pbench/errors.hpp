#pragma once

#include <stdexcept>
#include <string>

namespace pbench {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes (messages name both shapes).
struct ShapeError : Error {
  using Error::Error;
};

// Out-of-range ids/labels/axes and other contract violations.
struct ValueError : Error {
  using Error::Error;
};

// Attention row with no valid key.
struct MaskError : Error {
  using Error::Error;
};

// Missing or unreadable files.
struct IoError : Error {
  using Error::Error;
};

// Malformed file contents (messages carry line numbers where known).
struct FormatError : Error {
  using Error::Error;
};

// Generator asked for more unique combinations than the lexicon holds.
struct CapacityError : Error {
  using Error::Error;
};

// Checkpoint hyperparameters do not match the active configuration.
struct MismatchError : Error {
  using Error::Error;
};

// Invalid run configuration.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace pbench
