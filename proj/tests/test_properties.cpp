// Randomized invariants over fBm instances (fixed seeds).

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

#include "gderiv/covariance_models.hpp"
#include "gderiv/derivative_engine.hpp"
#include "gderiv/gaussian_core.hpp"

using namespace gderiv;

namespace {

FirstChaosVariable B(double t) { return FirstChaosVariable::point(t); }

// k times in (0, 1] at least `gap` apart.
std::vector<double> spread_times(std::mt19937_64& rng, std::size_t k, double gap) {
  std::uniform_real_distribution<double> u(0.02, 1.0);
  std::vector<double> out;
  while (out.size() < k) {
    const double t = u(rng);
    if (std::all_of(out.begin(), out.end(), [&](double s) { return std::abs(s - t) >= gap; })) out.push_back(t);
  }
  return out;
}

std::vector<FirstChaosVariable> points(const std::vector<double>& times) {
  std::vector<FirstChaosVariable> v;
  for (double t : times) v.push_back(B(t));
  return v;
}

double norm(const FirstChaosVariable& x, const CovarianceOracle& o) { return std::sqrt(inner_product(x, x, o)); }

}  // namespace

TEST_CASE("regression residuals are orthogonal to the span") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> hurst(0.1, 0.9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto oracle = as_oracle(ModelSpec::fbm(hurst(rng)));
    const auto times = spread_times(rng, 1 + trial % 5, 0.05);
    const GramSystem span(points(times), oracle);
    const auto target = B(std::uniform_real_distribution<double>(0.01, 1.0)(rng));
    const auto fit = regress(target, span);
    const auto residual = target - span.as_variable(fit);
    for (const auto& y : span.variables()) {
      CHECK(std::abs(inner_product(residual, y, oracle)) < 1e-10 * norm(target, oracle) * norm(y, oracle));
    }
  }
}

TEST_CASE("tower property: projecting a regression equals regressing on the sub-span") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> hurst(0.1, 0.9);
  for (int trial = 0; trial < 40; ++trial) {
    const auto oracle = as_oracle(ModelSpec::fbm(hurst(rng)));
    const auto times = spread_times(rng, 4, 0.05);
    const GramSystem big(points(times), oracle);
    const std::size_t k = 1 + trial % 3;
    const GramSystem sub(points({times.begin(), times.begin() + static_cast<long>(k)}), oracle);
    const auto target = B(std::uniform_real_distribution<double>(0.01, 1.0)(rng));
    const auto direct = regress(target, sub);
    const auto projected = project_affine(regress(target, big), big, sub);
    REQUIRE(direct.coefficients.size() == projected.coefficients.size());
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(std::abs(direct.coefficients[i] - projected.coefficients[i]) <=
            1e-10 * std::max(1.0, std::abs(direct.coefficients[i])));
    }
    CHECK(std::abs(direct.constant - projected.constant) < 1e-10);
  }
}

TEST_CASE("Gram matrices are positive semidefinite") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> hurst(0.05, 0.95), u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto oracle = as_oracle(ModelSpec::fbm(hurst(rng)));
    std::vector<double> times;
    for (int i = 0; i < 8; ++i) times.push_back(u(rng));
    times.push_back(times.front() + 1e-9);  // nearly collinear pair
    const GramSystem g(points(times), oracle);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g.gram()).eigenvalues();
    CHECK(ev.minCoeff() >= -1e-10 * ev.maxCoeff());
  }
}

TEST_CASE("Gram-Schmidt output is orthonormal") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> hurst(0.1, 0.9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto oracle = as_oracle(ModelSpec::fbm(hurst(rng)));
    const auto gs = gram_schmidt(points(spread_times(rng, 5, 0.05)), oracle);
    for (std::size_t i = 0; i < gs.orthonormal.size(); ++i) {
      for (std::size_t j = 0; j < gs.orthonormal.size(); ++j) {
        CHECK(std::abs(inner_product(gs.orthonormal[i], gs.orthonormal[j], oracle) - (i == j ? 1.0 : 0.0)) < 1e-10);
      }
    }
  }
}

TEST_CASE("sigma{Y} differentiates exactly when the closed-form derivative exists") {
  for (double H : {0.3, 0.5, 0.7}) {
    for (double s : {0.2, 0.5, 0.8, 1.0}) {
      CAPTURE(H);
      CAPTURE(s);
      const auto model = ModelSpec::fbm(H);
      const auto v = classify(model, 0.5, LinearSpan{{B(s)}}, QuotientSchedule::defaults(0.5));
      const auto exact = stochastic_derivative_exact(model, 0.5, B(s));
      CHECK(v.differentiates() == exact.has_value());
      if (exact && v.differentiates()) {
        CHECK(v.derivative.coefficients[0] == doctest::Approx(exact->coefficients[0]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("sub-spans of a differentiating span differentiate") {
  const std::vector<double> times = {0.2, 0.7, 0.9};
  for (double H : {0.3, 0.7}) {
    const auto model = ModelSpec::fbm(H);
    const LinearSpan big{points(times)};
    const auto schedule = QuotientSchedule::defaults(0.5);
    REQUIRE(classify(model, 0.5, big, schedule).differentiates());
    for (unsigned mask = 1; mask < 7; ++mask) {
      LinearSpan sub;
      for (std::size_t i = 0; i < times.size(); ++i) {
        if (mask & (1u << i)) sub.vars.push_back(B(times[i]));
      }
      CAPTURE(mask);
      CHECK(classify(model, 0.5, sub, schedule).differentiates());
      CHECK(projection_identity_residual(model, 0.5, big, sub, schedule) < 1e-9);
    }
  }
}

TEST_CASE("a diverging sigma{Y} has a degenerate even part") {
  for (double H : {0.2, 0.3, 0.4}) {
    for (double t : {0.25, 0.5, 1.0}) {
      const auto model = ModelSpec::fbm(H, 2.0);
      const auto schedule = QuotientSchedule::defaults(t, QuotientMode::forward);
      const auto v = classify(model, t, LinearSpan{{B(t)}}, schedule);
      REQUIRE(v.kind == VerdictKind::diverges);
      const auto even = classify(model, t, EvenFunctionOf{B(t)}, schedule);
      CHECK(even.kind == VerdictKind::degenerates);
      CHECK(std::abs(even.constant()) <= 1e-10);
    }
  }
}

TEST_CASE("Brownian motion: forward degenerates, backward gives 1/t, two-sided does not differentiate") {
  const auto model = ModelSpec::fbm(0.5);
  for (double t : {0.25, 0.5, 0.75}) {
    CAPTURE(t);
    const LinearSpan span{{B(t)}};
    const auto fwd = classify(model, t, span, QuotientSchedule::defaults(t, QuotientMode::forward));
    CHECK(fwd.kind == VerdictKind::degenerates);
    CHECK(std::abs(fwd.constant()) <= 1e-12);
    const auto bwd = classify(model, t, span, QuotientSchedule::defaults(t, QuotientMode::backward));
    REQUIRE(bwd.kind == VerdictKind::differentiates);
    CHECK(bwd.derivative.coefficients[0] == doctest::Approx(1.0 / t).epsilon(1e-8));
    CHECK_FALSE(classify(model, t, span, QuotientSchedule::defaults(t)).differentiates());
  }
}

TEST_CASE("a finite span differentiates iff each generator does") {
  const double t = 0.5;
  const std::vector<std::vector<double>> spans = {{0.2, 0.8}, {0.3, 0.5}, {0.5, 0.9}, {0.1, 0.4, 0.95}};
  for (double H : {0.3, 0.5, 0.7}) {
    for (const auto& times : spans) {
      const auto model = ModelSpec::fbm(H);
      const auto schedule = QuotientSchedule::defaults(t);
      bool each = true;
      for (double s : times) each = each && classify(model, t, LinearSpan{{B(s)}}, schedule).differentiates();
      CAPTURE(H);
      CHECK(classify(model, t, LinearSpan{points(times)}, schedule).differentiates() == each);
    }
  }
}
