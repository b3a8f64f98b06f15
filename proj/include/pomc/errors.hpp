#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pomc {

/// Raised by model loading and validation.
class ModelError : public std::runtime_error {
 public:
  enum class Kind { Schema, QMatrix, Observation, Value };

  ModelError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// The flow integrator lost too much mass to renormalization; use a smaller step.
class FlowAccuracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An observation path whose faces do not change at jump times.
class InconsistentPathError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Too many jumps before the horizon.
class ExplosionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), history_(std::move(history)) {}

  /// Sup-norm change of every iteration performed.
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

}  // namespace pomc
