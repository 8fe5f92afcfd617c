#pragma once

#include <stdexcept>
#include <string>

namespace mpmri {

/// A precondition on caller-supplied values was violated.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data (files, manifests, checkpoints) is malformed or inconsistent.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optimization diverged or a fold could not be trained.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mpmri
