#pragma once

namespace gderiv {

/// Gauss hypergeometric function 2F1(a, b; c; z) for real z < 1.
///
/// Negative arguments are first mapped into [0, 1) with the Pfaff
/// transformation. Arguments that land above 1/2 are continued around z = 1
/// with the standard connection formula, which keeps the series short when
/// the original z is large and negative. Throws DomainError for z >= 1, for
/// c a non-positive integer, or when the series does not converge within
/// 10,000 terms.
double hyp2f1(double a, double b, double c, double z);

/// Direct Taylor series of 2F1 at |z| < 1. Exposed for testing.
double hyp2f1_series(double a, double b, double c, double z, int max_terms = 10000);

}  // namespace gderiv
