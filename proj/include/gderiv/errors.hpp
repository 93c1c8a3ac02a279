#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gderiv {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A covariance or kernel evaluation produced a non-finite value.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, double s, double t)
      : std::runtime_error(what), s_(s), t_(t) {}
  double s() const noexcept { return s_; }
  double t() const noexcept { return t_; }

 private:
  double s_;
  double t_;
};

/// Gram matrix too ill-conditioned to regress on.
class SingularSpan : public std::runtime_error {
 public:
  SingularSpan(const std::string& what, double condition_estimate)
      : std::runtime_error(what), condition_(condition_estimate) {}
  double condition_estimate() const noexcept { return condition_; }

 private:
  double condition_;
};

/// Gram-Schmidt hit a (near) zero pivot. `index` is 1-based.
class DegenerateFamily : public std::runtime_error {
 public:
  DegenerateFamily(const std::string& what, std::size_t index)
      : std::runtime_error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class DegenerateVariable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sampling grid too coarse for the requested operator.
class ResolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation's precondition was checked and failed.
class PreconditionFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated an interface contract (missing data, unsupported mode).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace gderiv
