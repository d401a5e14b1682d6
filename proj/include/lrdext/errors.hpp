#ifndef LRDEXT_ERRORS_HPP_
#define LRDEXT_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <vector>

namespace lrdext {

// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Object used before it reached a usable state (e.g. an unfitted marginal).
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// Mismatched vector lengths.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Sample too small for the requested procedure.
struct SizeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Tail fit impossible on the given sample.
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Quadrature failure or divergence.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operation not available for this variant (e.g. derivatives of an empirical CDF).
struct UnsupportedError : std::logic_error {
  using std::logic_error::logic_error;
};

// Configuration rejected. Carries every violation found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::string message)
      : std::runtime_error(message), violations_{std::move(message)} {}

  explicit ConfigError(std::vector<std::string> violations)
      : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& item : items) {
      if (!out.empty()) out += "; ";
      out += item;
    }
    return out;
  }

  std::vector<std::string> violations_;
};

// Config is well formed but violates a hypothesis of the limit theorem
// (xi threshold, tail-index constraints). Subclass so callers can map it to
// the "infeasible" exit code.
class InfeasibleError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace lrdext

#endif  // LRDEXT_ERRORS_HPP_
