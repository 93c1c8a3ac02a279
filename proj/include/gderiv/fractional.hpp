#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace gderiv {

/// Function values on a strictly increasing grid; evaluated by linear
/// interpolation between nodes.
class SampledFunction {
 public:
  SampledFunction(std::vector<double> grid, std::vector<double> values);

  static SampledFunction from(const std::function<double(double)>& f, std::vector<double> grid);

  const std::vector<double>& grid() const noexcept { return grid_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return grid_.size(); }

  double operator()(double x) const;

 private:
  std::vector<double> grid_;
  std::vector<double> values_;
};

/// n+1 uniform nodes 0, T/n, ..., T.
std::vector<double> uniform_grid(double horizon, std::size_t steps);

/// Left Riemann-Liouville integral (I^alpha f)(x) of a sampled function whose
/// grid starts at 0. Product integration: the piecewise-linear interpolant is
/// integrated exactly against the (x-y)^{alpha-1} weight.
double frac_integral(double alpha, const SampledFunction& f, double x);

/// Gamma(alpha)^{-1} int_0^x (x-y)^{alpha-1} y^beta p(y) dy with p piecewise
/// linear and beta > -1. Segments next to the origin are integrated exactly
/// through incomplete beta functions; the rest interpolate y^beta p(y).
double weighted_frac_integral(double alpha, double beta, const SampledFunction& p, double x);

/// The operator (K_H h)(t) = int_0^t K_H(t,s) h(s) ds evaluated on h's grid
/// through the fractional-integral factorizations for H < 1/2 and H > 1/2
/// (plain integration at H = 1/2). Throws ResolutionError if the grid has
/// fewer than `min_nodes` nodes.
SampledFunction apply_KH(double H, const SampledFunction& h, std::size_t min_nodes = 64);

}  // namespace gderiv
