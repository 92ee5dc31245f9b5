#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace imdesign {

/// Caller broke a documented precondition (out-of-bounds design, step after done, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A catalog, checkpoint or config file could not be parsed.
class MalformedFile : public std::runtime_error {
 public:
  MalformedFile(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class VersionMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The variant sampler could not find a feasible variant within its retry budget.
class GenerationExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loss or gradient became non-finite during training.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejected user input (CLI flags, config keys, inspect coordinates).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace imdesign
