#pragma once

// Closed-form covariance models and the Volterra kernel of fBm.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gderiv/gaussian_core.hpp"

namespace gderiv {

/// A scalar function with (possibly one-sided) derivatives.
struct DifferentiableFunction {
  std::function<double(double)> value;
  /// Derivative on the requested side; nullopt where it does not exist.
  /// Two-sided requests should return nullopt when the sides disagree.
  std::function<std::optional<double>(double, Side)> derivative;
  std::string label;

  double operator()(double t) const { return value(t); }
  std::optional<double> derivative_at(double t, Side side) const;
};

DifferentiableFunction constant_function(double c);
/// slope * t + intercept
DifferentiableFunction linear_function(double slope, double intercept = 0.0);
/// |t - center|^exponent, exponent > 0. Not differentiable at the center
/// when exponent < 1; at exponent == 1 the one-sided derivatives are -1/+1.
DifferentiableFunction power_abs(double center, double exponent);
/// scale * exp(rate * t)
DifferentiableFunction exponential_function(double scale, double rate);

/// Primitives f_i(t) = int_0^t e_i of the trigonometric orthonormal basis of
/// L^2[0,1]: e_1 = 1, e_{2k} = sqrt2 cos(2 pi k t), e_{2k+1} = sqrt2 sin(2 pi k t).
std::vector<DifferentiableFunction> trig_onb_primitives(std::size_t n);

struct FractionalBrownian {
  double H = 0.5;
};

/// Z_t = sum_i f_i(t) N_i with i.i.d. standard normal N_i.
struct BasisExpansion {
  std::vector<DifferentiableFunction> functions;
  /// Declared A with sum_i f_i(t)^2 <= A on [0,T].
  double bound = 1.0;
};

/// Z_t = f1(t) N_1 + f2(t) N_2 with independent centered N_i.
struct TwoAtom {
  DifferentiableFunction f1;
  DifferentiableFunction f2;
  double var1 = 1.0;
  double var2 = 1.0;
};

using ModelVariant = std::variant<FractionalBrownian, BasisExpansion, TwoAtom>;

struct ModelSpec {
  ModelVariant variant;
  double horizon = 1.0;
  /// Deterministic mean m(t) added to the centered process.
  std::optional<DifferentiableFunction> mean;

  static ModelSpec fbm(double H, double horizon = 1.0);

  /// Throws DomainError on invalid parameters (H outside (0,1), T <= 0, empty
  /// expansion, basis bound violated on a probe grid, non-positive atom variance).
  void validate() const;

  bool is_fbm() const noexcept { return std::holds_alternative<FractionalBrownian>(variant); }
  /// Number of independent atoms N_i; 0 for fBm.
  std::size_t atom_count() const noexcept;
};

double fbm_cov(double H, double s, double t);

/// (y + d)^p - y^p for y >= 0, y + d >= 0, without cancellation for small d.
double pow_diff(double y, double d, double p);

/// fbm_cov(H, t + h, s) - fbm_cov(H, t, s) evaluated without cancellation.
double fbm_cov_increment(double H, double s, double t, double h);

double model_cov(const ModelSpec& model, double s, double t);

/// d/du cov(u, s) at u = t on the requested side.
std::optional<double> cov_partial_u(const ModelSpec& model, double t, double s, Side side);

/// V_H^{-1/2} where V_H = Gamma(2-2H) cos(pi H) / (pi H (1-2H)); equal to 1 at H = 1/2.
double kernel_normalization(double H);

/// Volterra kernel with B_t = int_0^t K_H(t,s) dW_s. Zero for s >= t.
double kernel_KH(double H, double t, double s);

/// Autocovariance at lag k of fractional Gaussian noise with step dt.
double fgn_autocovariance(double H, long long k, double dt);

CovarianceOracle as_oracle(const ModelSpec& model);

}  // namespace gderiv
