#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rdpc {

/// Thrown when an input violates a documented precondition
/// (shape mismatch, non-finite entries, out-of-range budget, ...).
class PreconditionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Gram-Schmidt met a (numerically) dependent column.
class RankDeficientError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Gradient descent on the codec objective produced a non-finite value.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// No strictly feasible noise level exists for the requested budgets.
/// `violated()` names the offending constraints ("distortion",
/// "perception", "classification").
class InfeasibleError : public std::runtime_error {
public:
  InfeasibleError(const std::string& what, std::vector<std::string> violated)
      : std::runtime_error(what), violated_(std::move(violated)) {}

  const std::vector<std::string>& violated() const noexcept { return violated_; }

private:
  std::vector<std::string> violated_;
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw PreconditionError(message);
}

}  // namespace detail
}  // namespace rdpc
