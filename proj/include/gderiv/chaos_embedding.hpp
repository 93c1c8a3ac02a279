#pragma once

// Finite Wiener chaos expansions u_t = sum_n J_n(f_n(., t)) with n <= 3, their
// derivative with respect to the past of W, and the linear equation
// D X_t = a X_t + b solved in that class.

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "gderiv/simulation.hpp"

namespace gderiv {

inline constexpr std::size_t kMaxChaosOrder = 3;

/// g(s_1, ..., s_n) on the simplex 0 <= s_n <= ... <= s_1.
using SimplexKernel = std::function<double(std::span<const double>)>;

/// Integral of f g over {0 <= s_n <= ... <= s_1 <= upper} by nested
/// Gauss-Legendre rules; `breakpoints` split the s_1 range where the kernels
/// jump (indicators of s_1 <= t). n = 0 multiplies the values at the empty
/// point. Throws DomainError for n > 3.
double simplex_inner_product(const SimplexKernel& f, const SimplexKernel& g, std::size_t n,
                             double upper, std::span<const double> breakpoints = {});

/// upper^n / n!
double simplex_volume(std::size_t n, double upper);

/// Left-point iterated sums sum_{i_1 > ... > i_n} g(s_{i_1}, ..., s_{i_n}) dW_{i_1} ... dW_{i_n}
/// over the increments on [0, upper] (upper defaults to the end of the grid).
/// Throws ContractError without increments, DomainError for n > 3.
Eigen::VectorXd j_integral_samples(std::size_t n, const SimplexKernel& g, const PathBatch& batch,
                                   std::optional<double> upper = std::nullopt);

/// E[J^2] of the discrete sums above: sum over ordered index chains of g^2 dt^n.
double j_integral_discrete_norm2(std::size_t n, const SimplexKernel& g, const PathBatch& batch,
                                 std::optional<double> upper = std::nullopt);

/// One order of a chaos vector: a kernel supported on s_1 <= support,
/// optionally known to be constant there.
struct OrderKernel {
  SimplexKernel f;
  double support = 0.0;
  std::optional<double> level;
  /// Interior s_1 values where f jumps.
  std::vector<double> breakpoints;
};

/// sum_n J_n(g_n) at a fixed time. kernels[n-1] is the order-n kernel.
struct ChaosVector {
  double constant = 0.0;
  std::vector<OrderKernel> kernels;

  std::size_t max_order() const noexcept { return kernels.size(); }
};

/// x + alpha * y, orderwise. Constant kernels with a common support stay constant.
ChaosVector combine(const ChaosVector& x, double alpha, const ChaosVector& y);
ChaosVector shift_constant(ChaosVector x, double c);

/// E[x y] through the chaos isometry.
double chaos_inner(const ChaosVector& x, const ChaosVector& y);
double chaos_norm(const ChaosVector& x);

/// f_0(t) = c_0 e^{at} - b/a (c_0 + b t when a = 0), f_n(., t) = c_n e^{at} 1_{Delta_n[0,t]}.
struct ClosedLinear {
  double a = 0.0;
  double b = 0.0;
  std::vector<double> c{0.0};  // c_0 .. c_N
};

/// Kernel of one order as a function of (s, t), with its t-derivative when known.
struct TimeKernel {
  std::function<double(std::span<const double>, double)> value;
  std::function<double(std::span<const double>, double)> dt;
  /// Kernels vanish for s_1 > t (the usual adapted form).
  bool adapted = true;
};

struct GeneralChaos {
  std::function<double(double)> f0;
  std::function<double(double)> df0;
  std::vector<TimeKernel> orders;  // n = 1..N
};

struct ChaosProcess {
  std::variant<ClosedLinear, GeneralChaos> family;
  double horizon = 1.0;

  /// Throws DomainError for order > 3, missing f0, or horizon <= 0.
  void validate() const;
  std::size_t max_order() const;
  /// Kernels of u_t.
  ChaosVector at(double t) const;
  /// f_0 at t.
  double mean(double t) const;
};

ChaosProcess solve_linear_embedding(double a, double b, std::vector<double> c, double horizon = 1.0);

/// Kernels d/dt f_n(., t) 1_{Delta_n[0,t]} and f_0'(t). nullopt when a
/// t-derivative is missing.
std::optional<ChaosVector> nelson_derivative(const ChaosProcess& x, double t);

/// || D X_t - a X_t - b ||_{L^2}. Throws PreconditionFailed when the
/// derivative is undefined.
double embedding_residual(const ChaosProcess& x, double a, double b, double t);

/// Samples of X_t from a Wiener batch (iterated left-point sums).
Eigen::VectorXd chaos_samples(const ChaosProcess& x, double t, const PathBatch& batch);

struct NelsonRow {
  double h = 0.0;
  ConditionalFit fit;           // (X_{t+h} - X_t)/h regressed on X_t
  double expected_slope = 0.0;  // (e^{ah} - 1)/h
  double expected_intercept = 0.0;
};

struct NelsonCheck {
  std::vector<NelsonRow> rows;
  /// |fitted slope - expected slope| / se, worst over h.
  double max_z = 0.0;
  /// Bias |expected slope - a| decreases as h decreases.
  bool bias_monotone = false;
};

/// Regression check of D X_t = a X_t + b for a ClosedLinear process with N <= 1,
/// where E[. | past of W] reduces to E[. | W_t]. Throws DomainError for N >= 2
/// or a process that is not ClosedLinear; t and t + h must be grid nodes.
NelsonCheck mc_verify_nelson(const ChaosProcess& x, double t, std::span<const double> hs,
                             const PathBatch& w_batch);

}  // namespace gderiv
