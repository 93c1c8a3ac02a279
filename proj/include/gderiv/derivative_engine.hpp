#pragma once

// Conditional difference quotients E[(Z_{t+h} - Z_t)/h | G] for Gaussian
// models, their limits as h -> 0, and the verdicts built on them.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gderiv/covariance_models.hpp"
#include "gderiv/gaussian_core.hpp"

namespace gderiv {

/// sigma{Y_1, ..., Y_n}. Offsets of the variables are added to the model mean.
struct LinearSpan {
  std::vector<FirstChaosVariable> vars;
};

/// sigma{f(Y)} for an even f and centered Y. Only the centered part of `var`
/// matters: E[Y | f(Y)] = 0 by symmetry, so the map itself is not needed.
struct EvenFunctionOf {
  FirstChaosVariable var;
};

/// sigma{f(Y)} for general f. Not computable exactly; see the Monte Carlo
/// estimators in simulation.hpp.
struct MeasurableFunctionOf {
  FirstChaosVariable var;
  std::function<double(double)> map;
};

/// sigma{N_i : i in atoms} for atom models (basis expansions, two-atom).
/// Indices are 0-based; an empty list means every atom.
struct FullGenerators {
  std::vector<std::size_t> atoms;
};

using ConditioningSpec = std::variant<LinearSpan, EvenFunctionOf, MeasurableFunctionOf, FullGenerators>;

enum class QuotientMode { forward, backward, two_sided };

/// h_k = h0 * ratio^k, k = 0..steps-1. Backward mode uses -h_k.
struct QuotientSchedule {
  double h0 = 0.0;
  double ratio = 0.5;
  int steps = 20;
  QuotientMode mode = QuotientMode::two_sided;

  /// h0 = t/16, ratio 1/2, 20 steps.
  static QuotientSchedule defaults(double t, QuotientMode mode = QuotientMode::two_sided);

  /// Signed steps for a one-sided mode.
  std::vector<double> signed_steps(QuotientMode side) const;
  /// Throws DomainError unless every t +- h_k needed by the mode lies in [0, horizon]
  /// and the parameters are in range.
  void validate(double t, double horizon) const;
};

struct Tolerances {
  double cauchy_rel = 1e-6;
  double cauchy_abs = 1e-9;
  int cauchy_window = 5;
  double variance = 1e-10;
  double slope_min = 0.05;
  double r_squared_min = 0.99;
  int monotone_min = 10;
  double two_sided_agreement = 1e-6;
  bool extrapolate = true;
  int max_extrapolation_levels = 4;
  /// When set, a diverging verdict also reports h^{1-alpha} times the quotient.
  std::optional<double> renormalize_alpha;
};

/// The conditioning resolved against a model at a time t: an affine space
/// with a Gram matrix and means, and the quotient map h -> coefficients.
class QuotientEngine {
 public:
  QuotientEngine(const ModelSpec& model, double t, const ConditioningSpec& spec);

  /// E[(Z_{t+h} - Z_t)/h | G] as coefficients over the conditioning variables.
  AffineCombination at(double h) const;
  /// Closed-form one-sided limit of `at` (side left or right); nullopt when a
  /// needed one-sided derivative does not exist.
  std::optional<AffineCombination> limit(Side side) const;

  double variance(const AffineCombination& c) const;
  double mean(const AffineCombination& c) const;
  double l2_norm(const AffineCombination& c) const;

  std::size_t dimension() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  double time() const noexcept { return t_; }
  const ModelSpec& model() const noexcept { return model_; }

 private:
  double mean_increment(double h) const;

  ModelSpec model_;
  double t_;
  CovarianceOracle oracle_;
  ConditioningSpec spec_;
  std::shared_ptr<const GramSystem> span_;  // LinearSpan only
  std::vector<std::size_t> atoms_;          // FullGenerators only
  std::vector<double> atom_variance_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd means_;
  std::vector<std::string> labels_;
};

AffineCombination difference_quotient(const ModelSpec& model, double t, double h,
                                      const ConditioningSpec& spec);

/// D^Y Z_t = Y / Var(Y) * d/ds Cov(Z_s, Y)|_{s=t} (plus m'(t) for a drifted
/// model). nullopt when the two-sided derivative does not exist. Throws
/// DegenerateVariable when Var(Y) = 0.
std::optional<AffineCombination> stochastic_derivative_exact(const ModelSpec& model, double t,
                                                             const FirstChaosVariable& y);

enum class VerdictKind { differentiates, degenerates, diverges, inconclusive };

const char* to_string(VerdictKind kind);

struct EvidenceRow {
  double h;
  AffineCombination quotient;
  double l2_norm;
};

struct Verdict {
  VerdictKind kind = VerdictKind::inconclusive;
  /// Limit of the quotient (differentiates, degenerates).
  AffineCombination derivative;
  double derivative_norm = 0.0;
  double derivative_variance = 0.0;
  /// Log-log fit of the norm path over the tail (always filled when computable).
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::optional<AffineCombination> renormalized;
  std::optional<double> renormalization_alpha;
  std::string diagnostics;
  std::vector<EvidenceRow> evidence;
  /// Forward and backward verdicts behind a two-sided verdict.
  std::vector<Verdict> one_sided;
  std::vector<std::string> labels;

  bool differentiates() const noexcept {
    return kind == VerdictKind::differentiates || kind == VerdictKind::degenerates;
  }
  /// Constant of a degenerate limit.
  double constant() const noexcept { return derivative.constant; }
};

Verdict classify(const ModelSpec& model, double t, const ConditioningSpec& spec,
                 const QuotientSchedule& schedule, const Tolerances& tol = {});

/// lim |h|^{1-alpha} E[(Z_{t+h} - Z_t)/h | G] over a one-sided schedule.
std::optional<AffineCombination> renormalized_limit(const ModelSpec& model, double t,
                                                    const ConditioningSpec& spec, double alpha,
                                                    const QuotientSchedule& schedule,
                                                    const Tolerances& tol = {});

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept. Needs two distinct x.
LinearFit least_squares(std::span<const double> x, std::span<const double> y);

struct RateFit {
  LinearFit fit;
  /// Schedule indices dropped because the norm was zero.
  std::vector<std::size_t> excluded;
  /// Fewer than two usable points.
  bool degenerate = false;
};

/// OLS of log ||quotient|| against log |h| over the schedule (forward side
/// for two-sided schedules).
RateFit rate_exponent(const ModelSpec& model, double t, const ConditioningSpec& spec,
                      const QuotientSchedule& schedule);

/// L^2 norm of D^sub Z_t - E[D^big Z_t | sub]. Throws PreconditionFailed
/// when `big` (or `sub`) does not differentiate Z at t.
double projection_identity_residual(const ModelSpec& model, double t, const LinearSpan& big,
                                    const LinearSpan& sub, const QuotientSchedule& schedule,
                                    const Tolerances& tol = {});

/// sum_{i <= N} ((f_i(t+h) - f_i(t))/h)^2 for a basis expansion.
double parseval_divergence(const ModelSpec& model, double t, double h, std::size_t n);

struct Extrapolation {
  std::vector<Eigen::VectorXd> sequence;
  int levels = 0;
  std::vector<double> ratios;
};

/// Iterated vector Aitken extrapolation with a local ratio per position,
/// estimated from successive differences. A level is applied only when the
/// ratios near the end lie in (0, 0.95); noise-level differences stop it.
Extrapolation extrapolate(std::vector<Eigen::VectorXd> sequence,
                          const std::function<double(const Eigen::VectorXd&)>& norm,
                          int max_levels);

}  // namespace gderiv
