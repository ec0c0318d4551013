#pragma once

#include <stdexcept>
#include <string>

namespace grasp {

// Shape or size of a tensor/image argument violates an operation's contract.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Persisted artifact (weight file, scenario, demo dir) failed validation.
struct CorruptFileError : std::runtime_error {
  explicit CorruptFileError(const std::string& msg) : std::runtime_error(msg) {}
};

// A perturbation could not be placed after the resample budget.
struct PlacementError : std::runtime_error {
  explicit PlacementError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training isolation was violated (e.g. a held-out task leaked into a batch).
struct IntegrityError : std::runtime_error {
  explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

// A numeric op produced (or was handed) a non-finite value.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Config file / CLI input is missing, unparsable, or out of range.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A referenced entity (block id, demo id) does not exist.
struct NotFoundError : std::runtime_error {
  explicit NotFoundError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace grasp
