#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ebmvae {

// Bad values or shapes handed to an API boundary (NaN input, mismatched dims,
// nonpositive variance, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The API was used out of order (gradient without a forward trace, predict with
// noise enabled, unsupported grid dimension, ...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A Langevin chain reached a non-finite state; carries the step index at which
// the divergence was detected (0-based, counting applied steps).
class DivergedChainError : public std::runtime_error {
 public:
  DivergedChainError(std::size_t step, const std::string& msg)
      : std::runtime_error(msg), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Energy parameters describe a non-normalizable density (testbed theta2 <= 0).
class NonNormalizableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Config file problems; line is 1-based, or -1 when not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg, int line = -1)
      : std::runtime_error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

// Filesystem / serialization failures (unreadable dataset dir, corrupt
// checkpoint payload, checkpoint version mismatch, ...).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ebmvae
