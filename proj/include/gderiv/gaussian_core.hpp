#pragma once

// Finite-dimensional Gaussian linear algebra over the first chaos of a
// process: inner products through a covariance oracle, Gram systems,
// regression (conditional expectation), Gram-Schmidt and projection
// between nested spans.

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gderiv/errors.hpp"

namespace gderiv {

struct ChaosTerm {
  double time;
  double weight;
  friend bool operator==(const ChaosTerm&, const ChaosTerm&) = default;
};

/// A finite linear combination sum_j w_j Z_{t_j} plus a deterministic offset.
///
/// Terms are kept sorted by time with duplicate times merged and zero weights
/// dropped, so equal variables compare equal structurally.
class FirstChaosVariable {
 public:
  FirstChaosVariable() = default;
  explicit FirstChaosVariable(std::vector<ChaosTerm> terms, double offset = 0.0);

  /// Z_t with the given mean offset.
  static FirstChaosVariable point(double time, double offset = 0.0);
  static FirstChaosVariable constant(double value);

  const std::vector<ChaosTerm>& terms() const noexcept { return terms_; }
  double offset() const noexcept { return offset_; }
  bool is_constant() const noexcept { return terms_.empty(); }

  FirstChaosVariable scaled(double factor) const;
  FirstChaosVariable operator+(const FirstChaosVariable& other) const;
  FirstChaosVariable operator-(const FirstChaosVariable& other) const;

  friend bool operator==(const FirstChaosVariable&, const FirstChaosVariable&) = default;

 private:
  std::vector<ChaosTerm> terms_;
  double offset_ = 0.0;
};

enum class Side { left, right, two_sided };

/// Covariance model rho(s,t) of the centered part, with an optional mean.
struct CovarianceOracle {
  std::function<double(double, double)> cov;
  /// d/du cov(u,s) at u=t on the requested side; nullopt when undefined.
  std::function<std::optional<double>(double t, double s, Side side)> partial_u;
  /// Mean function m(t); empty means centered.
  std::function<double(double)> mean;
  /// cov(t+h,s) - cov(t,s) without cancellation; empty means plain subtraction.
  std::function<double(double s, double t, double h)> increment;

  double mean_at(double t) const { return mean ? mean(t) : 0.0; }
  double cov_increment(double s, double t, double h) const;
};

/// Largest relative disagreement between partial_u and a central difference
/// of cov over the probe pairs (t,s). Probes where the one-sided derivatives
/// differ or are undefined are skipped.
double partial_consistency_error(const CovarianceOracle& oracle,
                                 std::span<const std::pair<double, double>> probes,
                                 double step);

double inner_product(const FirstChaosVariable& x, const FirstChaosVariable& y,
                     const CovarianceOracle& oracle);

/// sum_i c_i Y_i + constant over an ordered list of variables.
struct AffineCombination {
  std::vector<double> coefficients;
  double constant = 0.0;
};

/// Variables together with their factorized Gram matrix. Immutable once built.
class GramSystem {
 public:
  static constexpr double kDefaultMinRcond = 1e-12;

  GramSystem(std::vector<FirstChaosVariable> variables, CovarianceOracle oracle,
             double min_rcond = kDefaultMinRcond);

  const std::vector<FirstChaosVariable>& variables() const noexcept { return vars_; }
  const CovarianceOracle& oracle() const noexcept { return oracle_; }
  const Eigen::MatrixXd& gram() const noexcept { return gram_; }
  std::size_t size() const noexcept { return vars_.size(); }

  /// Reciprocal condition estimate of the Gram matrix (0 when singular).
  double rcond() const noexcept { return rcond_; }
  bool singular() const noexcept { return rcond_ < min_rcond_; }

  /// Solves gram * x = rhs; throws SingularSpan when ill-conditioned.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

  /// (<target, Y_i>)_i
  Eigen::VectorXd cross_covariances(const FirstChaosVariable& target) const;
  Eigen::VectorXd offsets() const;

  double variance(const AffineCombination& combo) const;
  double mean(const AffineCombination& combo) const;
  /// Sqrt of E[(sum c_i Y_i + constant)^2].
  double l2_norm(const AffineCombination& combo) const;
  FirstChaosVariable as_variable(const AffineCombination& combo) const;

 private:
  std::vector<FirstChaosVariable> vars_;
  CovarianceOracle oracle_;
  Eigen::MatrixXd gram_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  bool use_ldlt_ = false;
  double rcond_ = 0.0;
  double min_rcond_;
};

/// Conditional expectation E[target | sigma(span)] for jointly Gaussian data.
AffineCombination regress(const FirstChaosVariable& target, const GramSystem& span);

/// Regression from precomputed cross covariances (<target, Y_i>)_i.
AffineCombination regress_from(const Eigen::VectorXd& cross, double target_offset,
                               const GramSystem& span);

struct GramSchmidtResult {
  std::vector<FirstChaosVariable> orthonormal;
  /// Lower triangular: orthonormal[k] = sum_j change_of_basis(k,j) * family[j].
  Eigen::MatrixXd change_of_basis;
};

/// Throws DegenerateFamily (1-based index) when a residual norm falls below
/// `relative_tol` times the norm of the input vector.
GramSchmidtResult gram_schmidt(const std::vector<FirstChaosVariable>& family,
                               const CovarianceOracle& oracle, double relative_tol = 1e-8);

/// Projects an affine combination over `source` onto the span of `sub`.
/// `sub` is assumed to lie inside the span of `source`.
AffineCombination project_affine(const AffineCombination& expr, const GramSystem& source,
                                 const GramSystem& sub);

}  // namespace gderiv
