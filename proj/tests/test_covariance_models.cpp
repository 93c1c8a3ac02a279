#include <doctest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>

#include "gderiv/covariance_models.hpp"
#include "gderiv/errors.hpp"
#include "gderiv/fractional.hpp"
#include "gderiv/special_functions.hpp"

using namespace gderiv;
using doctest::Approx;

namespace {

double integrate(const std::function<double(double)>& f, double a, double b) {
  boost::math::quadrature::tanh_sinh<double> q;
  return q.integrate(f, a, b, 1e-12);
}

}  // namespace

TEST_CASE("fbm covariance") {
  CHECK(fbm_cov(0.5, 0.3, 0.7) == 0.3);
  CHECK(fbm_cov(0.2, 1.0, 1.0) == Approx(1.0).epsilon(1e-15));
  CHECK(fbm_cov(0.7, 0.5, 0.5) == Approx(std::pow(0.5, 1.4)));
  CHECK(fbm_cov(0.7, 0.5, 0.5) == Approx(0.37893).epsilon(1e-5));
  CHECK_THROWS_AS(fbm_cov(1.0, 0.5, 0.5), DomainError);
  CHECK_THROWS_AS(fbm_cov(0.0, 0.5, 0.5), DomainError);
  CHECK_THROWS_AS(fbm_cov(0.5, -0.1, 0.5), DomainError);
}

TEST_CASE("cancellation-free covariance increments") {
  for (double H : {0.3, 0.5, 0.7}) {
    for (double s : {0.2, 0.5, 0.9}) {
      const double direct = fbm_cov(H, 0.5 + 1e-3, s) - fbm_cov(H, 0.5, s);
      CHECK(fbm_cov_increment(H, s, 0.5, 1e-3) == Approx(direct).epsilon(1e-9));
    }
  }
  // At h = 1e-12 the naive difference has no correct digits left.
  const double h = 1e-12;
  const double expected = 0.7 * (std::pow(1.0, 0.4) - std::pow(0.5, 0.4)) * h;
  CHECK(fbm_cov_increment(0.7, 0.5, 1.0, h) == Approx(expected).epsilon(1e-9));
  CHECK(pow_diff(0.0, 2.0, 0.5) == Approx(std::sqrt(2.0)));
  CHECK(pow_diff(2.0, -2.0, 0.5) == Approx(-std::sqrt(2.0)));
}

TEST_CASE("cov_partial_u closed forms") {
  const auto m7 = ModelSpec::fbm(0.7);
  const auto m3 = ModelSpec::fbm(0.3);
  const auto m5 = ModelSpec::fbm(0.5);
  CHECK(*cov_partial_u(m7, 0.5, 0.5, Side::two_sided) == Approx(0.7 * std::pow(0.5, 0.4)));
  CHECK(*cov_partial_u(m7, 0.5, 0.5, Side::two_sided) == Approx(0.530501).epsilon(1e-6));
  CHECK_FALSE(cov_partial_u(m3, 0.5, 0.5, Side::two_sided));
  CHECK_FALSE(cov_partial_u(m3, 0.5, 0.5, Side::right));
  CHECK(*cov_partial_u(m3, 0.5, 0.2, Side::two_sided) == Approx(-0.08976).epsilon(1e-4));
  CHECK(*cov_partial_u(m5, 0.5, 0.5, Side::right) == 0.0);
  CHECK(*cov_partial_u(m5, 0.5, 0.5, Side::left) == 1.0);
  CHECK_FALSE(cov_partial_u(m5, 0.5, 0.5, Side::two_sided));
  CHECK_THROWS_AS(cov_partial_u(m7, 1.5, 0.5, Side::right), DomainError);
}

TEST_CASE("atom models") {
  ModelSpec two{TwoAtom{linear_function(1.0), power_abs(0.5, 0.3), 1.0, 2.0}, 1.0, std::nullopt};
  two.validate();
  const auto oracle = as_oracle(two);
  CHECK(oracle.cov(0.2, 0.4) ==
        Approx(0.08 + 2.0 * std::pow(0.3, 0.3) * std::pow(0.1, 0.3)));
  // f2 is not differentiable at 0.5, but only matters when f2(s) != 0.
  CHECK_FALSE(cov_partial_u(two, 0.5, 0.2, Side::two_sided));
  CHECK(*cov_partial_u(two, 0.5, 0.5, Side::two_sided) == Approx(0.5));

  ModelSpec single{BasisExpansion{{linear_function(1.0)}, 1.0}, 1.0, std::nullopt};
  CHECK(as_oracle(single).cov(0.3, 0.7) == Approx(0.21));

  ModelSpec too_big{BasisExpansion{{linear_function(2.0)}, 1.0}, 1.0, std::nullopt};
  CHECK_THROWS_AS(too_big.validate(), DomainError);
  ModelSpec bad_var{TwoAtom{linear_function(1.0), linear_function(1.0), 0.0, 1.0}, 1.0,
                    std::nullopt};
  CHECK_THROWS_AS(bad_var.validate(), DomainError);
}

TEST_CASE("truncated ONB expansion approaches Brownian covariance") {
  double previous = 1.0;
  for (std::size_t n : {8u, 64u, 512u}) {
    ModelSpec model{BasisExpansion{trig_onb_primitives(n), 1.0}, 1.0, std::nullopt};
    model.validate();
    const double err = std::abs(as_oracle(model).cov(0.3, 0.7) - 0.3);
    CHECK(err < previous);
    previous = err;
  }
  CHECK(previous < 1e-3);
}

TEST_CASE("hyp2f1") {
  CHECK(hyp2f1(0.0, 0.3, 0.8, -5.0) == 1.0);
  CHECK(hyp2f1(0.2, 0.3, 0.8, 0.0) == 1.0);
  // mpmath, 30 digits
  CHECK(hyp2f1(-0.2, 0.7, 0.8, -1.0) == Approx(1.132019701016688287).epsilon(1e-12));
  CHECK(hyp2f1(0.2, -0.2, 0.7, -0.4) == Approx(1.0206839842090564953).epsilon(1e-12));
  CHECK(hyp2f1(-0.2, 0.2, 0.3, -50.0) == Approx(1.8809111091731674946).epsilon(1e-12));
  CHECK(hyp2f1(0.3, -0.3, 1.2, -1e4) == Approx(8.2199128090623302707).epsilon(1e-12));
  CHECK(hyp2f1(0.5, 1.5, 2.5, 0.3) == Approx(1.1080625510569319884).epsilon(1e-12));
  CHECK(hyp2f1(-0.2, 0.2, 0.3, -0.999) == Approx(1.101141332547733612).epsilon(1e-12));
  CHECK_THROWS_AS(hyp2f1(0.1, 0.2, -1.0, -0.5), DomainError);
  CHECK_THROWS_AS(hyp2f1(0.1, 0.2, 0.3, 1.0), DomainError);
}

TEST_CASE("Volterra kernel") {
  CHECK(kernel_KH(0.5, 0.7, 0.3) == 1.0);
  CHECK(kernel_KH(0.7, 0.3, 0.3) == 0.0);
  CHECK(kernel_KH(0.3, 0.3, 0.7) == 0.0);
  CHECK_THROWS_AS(kernel_KH(0.7, 0.5, 0.0), DomainError);
  // mpmath values of the normalized kernel
  CHECK(kernel_KH(0.3, 0.7, 0.3) == Approx(0.92236514575040767885).epsilon(1e-11));
  CHECK(kernel_KH(0.3, 1.0, 0.01) == Approx(1.1777492116859150937).epsilon(1e-11));
  CHECK(kernel_KH(0.7, 0.7, 0.3) == Approx(0.94152004452323584628).epsilon(1e-11));
  CHECK(kernel_KH(0.7, 1.0, 0.01) == Approx(1.6191536283041703436).epsilon(1e-11));
  CHECK(kernel_normalization(0.3) == Approx(0.85021709128234329435).epsilon(1e-13));
  CHECK(kernel_normalization(0.7) == Approx(1.0024650166442576755).epsilon(1e-13));
  CHECK(kernel_normalization(0.5 + 1e-9) == Approx(1.0).epsilon(1e-8));

  for (double H : {0.3, 0.7}) {
    const double r = integrate([H](double u) { return kernel_KH(H, 0.3, u) * kernel_KH(H, 0.7, u); },
                               0.0, 0.3);
    CHECK(r == Approx(fbm_cov(H, 0.3, 0.7)).epsilon(1e-3));
  }
}

TEST_CASE("fractional Gaussian noise autocovariance") {
  CHECK(fgn_autocovariance(0.7, 0, 0.01) == Approx(std::pow(0.01, 1.4)));
  CHECK(fgn_autocovariance(0.5, 3, 0.1) == 0.0);
  CHECK(fgn_autocovariance(0.7, 1, 1.0) == Approx(0.5 * (std::pow(2.0, 1.4) - 2.0)));
  CHECK(fgn_autocovariance(0.7, 1, 1.0) ==
        Approx(fbm_cov(0.7, 1.0, 2.0) - fbm_cov(0.7, 1.0, 1.0)));
}

TEST_CASE("fractional integrals") {
  const auto grid = uniform_grid(1.0, 256);
  const auto one = SampledFunction::from([](double) { return 1.0; }, grid);
  CHECK(frac_integral(1.0, one, 0.37) == Approx(0.37).epsilon(1e-14));

  const auto lin = SampledFunction::from([](double y) { return y; }, grid);
  const double exact = std::tgamma(2.0) / std::tgamma(2.6) * std::pow(0.5, 1.6);
  CHECK(frac_integral(0.6, lin, 0.5) == Approx(exact).epsilon(1e-6));

  const auto smooth = SampledFunction::from([](double y) { return 1.0 + y * y; },
                                            uniform_grid(1.0, 1024));
  const auto inner =
      SampledFunction::from([&](double x) { return frac_integral(0.4, smooth, x); },
                            uniform_grid(1.0, 1024));
  CHECK(frac_integral(0.3, inner, 0.8) == Approx(frac_integral(0.7, smooth, 0.8)).epsilon(1e-5));

  // weight y^beta near the origin
  const auto fine_one = SampledFunction::from([](double) { return 1.0; }, uniform_grid(1.0, 1024));
  const double w = weighted_frac_integral(0.3, -0.4, fine_one, 0.6);
  CHECK(w == Approx(std::tgamma(0.6) / std::tgamma(0.9) * std::pow(0.6, -0.1)).epsilon(1e-6));
  CHECK(weighted_frac_integral(0.3, -0.3, one, 0.0) == Approx(std::tgamma(0.7)));
  CHECK(weighted_frac_integral(0.3, 0.2, one, 0.0) == 0.0);

  CHECK_THROWS_AS(frac_integral(0.0, one, 0.5), DomainError);
  CHECK_THROWS_AS(frac_integral(0.5, one, 1.5), DomainError);
  CHECK_THROWS_AS(weighted_frac_integral(0.5, -1.0, one, 0.5), DomainError);
  CHECK_THROWS_AS(SampledFunction({0.0, 0.0}, {1.0, 1.0}), DomainError);
}

TEST_CASE("K_H operator") {
  const auto grid = uniform_grid(1.0, 1024);
  const auto one = SampledFunction::from([](double) { return 1.0; }, grid);
  CHECK(apply_KH(0.5, one)(0.5) == Approx(0.5));

  // Independent oracles: kernel quadrature and mpmath.
  const double kh[] = {0.56045190709097149848, 0.42334132450521504774};
  int i = 0;
  for (double H : {0.3, 0.7}) {
    const double quad = integrate([H](double s) { return kernel_KH(H, 0.5, s); }, 0.0, 0.5);
    CHECK(quad == Approx(kh[i++]).epsilon(1e-9));
    CHECK(std::abs(apply_KH(H, one)(0.5) - quad) < 1e-3);
    const auto ramp = SampledFunction::from([](double s) { return s; }, grid);
    const double quad_t = integrate([H](double s) { return kernel_KH(H, 0.5, s) * s; }, 0.0, 0.5);
    CHECK(std::abs(apply_KH(H, ramp)(0.5) - quad_t) < 1e-3);
  }
  CHECK_THROWS_AS(apply_KH(0.7, SampledFunction::from([](double) { return 1.0; },
                                                      uniform_grid(1.0, 16))),
                  ResolutionError);
}
