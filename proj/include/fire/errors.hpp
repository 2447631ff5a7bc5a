#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fire {

// Invalid sampling/experiment configuration (bad temperature, k = 0, unknown key, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller passed an argument outside an operation's precondition (n > N, empty pool, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A model source produced something unusable (non-finite logits, unknown token, ...).
class SourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Remote model transport failure. Retriable: carries the decoding step and
// how many attempts were made before giving up.
class TransportError : public SourceError {
 public:
  TransportError(const std::string& detail, std::size_t step, int attempts)
      : SourceError(detail + " (step " + std::to_string(step) + ", " + std::to_string(attempts) +
                    " attempt" + (attempts == 1 ? "" : "s") + ")"),
        detail_(detail),
        step_(step),
        attempts_(attempts) {}

  const std::string& detail() const noexcept { return detail_; }
  std::size_t step() const noexcept { return step_; }
  int attempts() const noexcept { return attempts_; }

 private:
  std::string detail_;
  std::size_t step_;
  int attempts_;
};

// External checker could not be run at all (spawn failure, bad command).
class CheckerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken internal invariant; indicates a bug, never user error.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace fire
