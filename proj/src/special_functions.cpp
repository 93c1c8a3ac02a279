#include "gderiv/special_functions.hpp"

#include <cmath>
#include <numbers>

#include "gderiv/errors.hpp"

namespace gderiv {

namespace {

bool is_nonpositive_integer(double x) { return x <= 0.0 && x == std::round(x); }

double rgamma(double x) { return is_nonpositive_integer(x) ? 0.0 : 1.0 / std::tgamma(x); }

}  // namespace

double hyp2f1_series(double a, double b, double c, double z, int max_terms) {
  if (is_nonpositive_integer(c)) throw DomainError("hyp2f1: c must not be a non-positive integer");
  double term = 1.0;
  double sum = 1.0;
  for (int n = 0; n < max_terms; ++n) {
    term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
    sum += term;
    if (term == 0.0) return sum;
    if (std::abs(term) < 1e-16 * std::abs(sum) && n > 2) return sum;
  }
  throw DomainError("hyp2f1: series did not converge");
}

double hyp2f1(double a, double b, double c, double z) {
  if (!(z < 1.0)) throw DomainError("hyp2f1: only z < 1 is supported");
  if (is_nonpositive_integer(c)) throw DomainError("hyp2f1: c must not be a non-positive integer");
  if (a == 0.0 || b == 0.0 || z == 0.0) return 1.0;

  double prefactor = 1.0;
  double w = z;
  double one_minus_w = 1.0 - z;
  double bb = b;
  if (z < 0.0) {
    // Pfaff: F(a,b;c;z) = (1-z)^{-a} F(a, c-b; c; z/(z-1))
    prefactor = std::pow(1.0 - z, -a);
    w = z / (z - 1.0);
    one_minus_w = 1.0 / (1.0 - z);
    bb = c - b;
    if (bb == 0.0) return prefactor;
  }

  if (w <= 0.5) return prefactor * hyp2f1_series(a, bb, c, w);

  const double gap = c - a - bb;
  if (std::abs(gap - std::round(gap)) < 1e-6) {
    // Connection coefficients blow up near integer gaps.
    return prefactor * hyp2f1_series(a, bb, c, w);
  }
  const double first = std::tgamma(c) * std::tgamma(gap) * rgamma(c - a) * rgamma(c - bb) *
                       hyp2f1_series(a, bb, a + bb - c + 1.0, one_minus_w);
  const double second = std::pow(one_minus_w, gap) * std::tgamma(c) * std::tgamma(-gap) *
                        rgamma(a) * rgamma(bb) *
                        hyp2f1_series(c - a, c - bb, gap + 1.0, one_minus_w);
  return prefactor * (first + second);
}

}  // namespace gderiv
