#include <doctest.h>

#include <cmath>
#include <vector>

#include "gderiv/chaos_embedding.hpp"
#include "gderiv/errors.hpp"

using namespace gderiv;

namespace {

const SimplexKernel one = [](std::span<const double>) { return 1.0; };

PathBatch wiener(std::size_t steps, std::size_t paths, std::uint64_t seed) {
  return sample_fbm_volterra(0.5, uniform_grid(1.0, steps), paths, seed);
}

double se_of_variance(const Eigen::VectorXd& x) {
  const double m = x.mean();
  const Eigen::ArrayXd sq = (x.array() - m).square();
  const double v = sq.mean();
  return std::sqrt(((sq - v).square()).mean() / static_cast<double>(x.size()));
}

ChaosProcess perturbed(double a, double c0, double c1, double eps) {
  GeneralChaos g;
  g.f0 = [=](double t) { return c0 * std::exp(a * t); };
  g.df0 = [=](double t) { return a * c0 * std::exp(a * t); };
  g.orders.push_back({[=](std::span<const double>, double t) { return c1 * (1 + eps * t) * std::exp(a * t); },
                      [=](std::span<const double>, double t) {
                        return c1 * std::exp(a * t) * (eps + a * (1 + eps * t));
                      }});
  return {g, 1.0};
}

}  // namespace

TEST_CASE("simplex inner products") {
  CHECK(simplex_inner_product(one, one, 2, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(simplex_inner_product(one, one, 3, 2.0) == doctest::Approx(8.0 / 6).epsilon(1e-14));
  CHECK(simplex_volume(3, 2.0) == doctest::Approx(8.0 / 6));

  SimplexKernel ind = [](std::span<const double> s) { return s[0] <= 0.5 ? 1.0 : 0.0; };
  const std::vector<double> cut = {0.5};
  CHECK(simplex_inner_product(ind, ind, 2, 1.0, cut) == doctest::Approx(0.125).epsilon(1e-14));

  SimplexKernel f = [](std::span<const double> s) { return 1 + 2 * s[0] - s[1] * s[1]; };
  SimplexKernel g = [](std::span<const double> s) { return s[0] * s[1] + 0.5; };
  CHECK(std::abs(simplex_inner_product(f, g, 2, 0.7) - 2284429.0 / 8000000.0) < 1e-12);

  SimplexKernel f3 = [](std::span<const double> s) { return s[0] * s[2] + 1; };
  SimplexKernel g3 = [](std::span<const double> s) { return s[1] - s[2] * s[2]; };
  CHECK(std::abs(simplex_inner_product(f3, g3, 3, 1.0) - 9.0 / 112.0) < 1e-12);

  CHECK(simplex_inner_product(one, one, 0, 1.0) == 1.0);
  CHECK_THROWS_AS(simplex_inner_product(one, one, 4, 1.0), DomainError);
}

TEST_CASE("iterated integrals") {
  static const auto batch = wiener(64, 20000, 31);
  const RowMatrix w = batch.w();

  SUBCASE("order one with a unit kernel is W_T") {
    const auto j = j_integral_samples(1, one, batch);
    CHECK((j - w.col(64)).cwiseAbs().maxCoeff() < 1e-12);
    const auto half = j_integral_samples(1, one, batch, 0.5);
    CHECK((half - w.col(32)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("order two with a unit kernel") {
    const auto j = j_integral_samples(2, one, batch);
    Eigen::VectorXd qv = batch.dw->rowwise().squaredNorm();
    Eigen::VectorXd expected = 0.5 * (w.col(64).array().square() - qv.array()).matrix();
    CHECK((j - expected).cwiseAbs().maxCoeff() < 1e-10);
    const double se = std::sqrt(j.squaredNorm() / 20000.0 / 20000.0);
    CHECK(std::abs(j.mean()) < 3 * se);
    const double var = (j.array() - j.mean()).square().mean();
    CHECK(std::abs(var - j_integral_discrete_norm2(2, one, batch)) < 3 * se_of_variance(j));
  }
  SUBCASE("isometry for n <= 3 and orthogonality of orders") {
    SimplexKernel k1 = [](std::span<const double> s) { return 1 + s[0]; };
    SimplexKernel k2 = [](std::span<const double> s) { return s[0] - s[1]; };
    SimplexKernel k3 = [](std::span<const double> s) { return 1 + s[2]; };
    const std::vector<std::pair<std::size_t, SimplexKernel>> cases = {{1, k1}, {2, k2}, {3, k3}};
    std::vector<Eigen::VectorXd> js;
    for (const auto& [n, k] : cases) {
      CAPTURE(n);
      const auto j = j_integral_samples(n, k, batch);
      const double var = (j.array() - j.mean()).square().mean();
      const double discrete = j_integral_discrete_norm2(n, k, batch);
      CHECK(std::abs(var - discrete) < 3 * se_of_variance(j));
      // left-point sums miss the diagonal cells: O(n / steps) relative gap
      const double exact = simplex_inner_product(k, k, n, 1.0);
      CHECK(std::abs(discrete - exact) < 4.0 * n / 64 * exact);
      js.push_back(j);
    }
    for (std::size_t a = 0; a < js.size(); ++a) {
      for (std::size_t b = a + 1; b < js.size(); ++b) {
        const Eigen::VectorXd prod = js[a].cwiseProduct(js[b]);
        const double se = std::sqrt((prod.array() - prod.mean()).square().mean() / 20000.0);
        CHECK(std::abs(prod.mean()) < 3 * se);
      }
    }
  }
  SUBCASE("errors") {
    const auto chol = sample_fbm(0.5, uniform_grid(1.0, 8), 4, 1, SamplerMethod::cholesky);
    CHECK_THROWS_AS(j_integral_samples(1, one, chol), ContractError);
    CHECK_THROWS_AS(j_integral_samples(4, one, batch), DomainError);
  }
}

TEST_CASE("solved linear family") {
  SUBCASE("deterministic solution") {
    const auto x = solve_linear_embedding(1.0, 0.0, {1.0});
    CHECK(x.mean(0.7) == doctest::Approx(std::exp(0.7)));
    const auto d = nelson_derivative(x, 0.7);
    REQUIRE(d);
    CHECK(d->constant == doctest::Approx(std::exp(0.7)));
    CHECK(embedding_residual(x, 1.0, 0.0, 0.7) < 1e-12);
  }
  SUBCASE("a = 1, b = 0.5, c = (1, 1)") {
    const auto x = solve_linear_embedding(1.0, 0.5, {1.0, 1.0});
    const double t = 0.4;
    CHECK(x.mean(t) == doctest::Approx(std::exp(t) - 0.5));
    const auto d = nelson_derivative(x, t);
    REQUIRE(d);
    const auto target = shift_constant(combine(ChaosVector{}, 1.0, x.at(t)), 0.5);
    CHECK(chaos_norm(combine(*d, -1.0, target)) < 1e-14);

    const auto batch = wiener(64, 10, 4);
    const auto xs = chaos_samples(x, 0.5, batch);
    const RowMatrix w = batch.w();
    for (Eigen::Index p = 0; p < 10; ++p) {
      CHECK(xs(p) == doctest::Approx(std::exp(0.5) * (1 + w(p, 32)) - 0.5).epsilon(1e-12));
    }
  }
  SUBCASE("a = 0 branch") {
    const auto x = solve_linear_embedding(0.0, 1.0, {0.0, 1.0});
    CHECK(x.mean(0.3) == doctest::Approx(0.3));
    const auto d = nelson_derivative(x, 0.3);
    REQUIRE(d);
    CHECK(d->constant == 1.0);
    CHECK(embedding_residual(x, 0.0, 1.0, 0.3) < 1e-10);
  }
  SUBCASE("residual vanishes on the whole family") {
    for (double a : {-1.0, 0.0, 1.0}) {
      for (double b : {0.0, 0.5}) {
        for (const auto& c : std::vector<std::vector<double>>{{1.0}, {0.3, -1.2}, {2.0, 0.5, 0.7}}) {
          const auto x = solve_linear_embedding(a, b, c);
          for (int k = 1; k <= 16; ++k) {
            CHECK(embedding_residual(x, a, b, k / 17.0) < 1e-10);
          }
        }
      }
    }
  }
  SUBCASE("the wrong equation leaves a residual") {
    const auto x = solve_linear_embedding(1.0, 0.5, {1.0, 1.0});
    CHECK(embedding_residual(x, 0.5, 0.5, 0.5) > 0.1);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(solve_linear_embedding(1.0, 0.0, {1, 1, 1, 1, 1}), DomainError);
    CHECK_THROWS_AS(solve_linear_embedding(1.0, 0.0, {}), DomainError);
  }
}

TEST_CASE("perturbed kernels violate the kernel equation") {
  const double t = 0.5;
  double previous = 0.0;
  for (double eps : {0.1, 0.5, 1.0}) {
    const auto x = perturbed(1.0, 1.0, 2.0, eps);
    const double r = embedding_residual(x, 1.0, 0.0, t);
    CHECK(r == doctest::Approx(2.0 * eps * std::exp(t) * std::sqrt(t)).epsilon(1e-10));
    CHECK(r > previous);
    previous = r;
  }
  CHECK(embedding_residual(perturbed(1.0, 1.0, 2.0, 0.0), 1.0, 0.0, t) < 1e-10);

  auto x = perturbed(1.0, 1.0, 2.0, 0.1);
  std::get<GeneralChaos>(x.family).orders[0].dt = nullptr;
  CHECK_FALSE(nelson_derivative(x, t));
  CHECK_THROWS_AS(embedding_residual(x, 1.0, 0.0, t), PreconditionFailed);
}

TEST_CASE("Monte Carlo check of the derivative") {
  static const auto batch = wiener(256, 100000, 12);
  const std::vector<double> hs = {16.0 / 256, 8.0 / 256, 4.0 / 256};

  SUBCASE("a = 1, b = 0, c = (1, 1)") {
    const auto res = mc_verify_nelson(solve_linear_embedding(1.0, 0.0, {1.0, 1.0}), 0.5, hs, batch);
    REQUIRE(res.rows.size() == 3);
    CHECK(res.max_z < 3.0);
    CHECK(res.bias_monotone);
    const auto& last = res.rows.back().fit;
    CHECK(std::abs(last.slope - 1.0) < 3 * last.slope_se + std::expm1(hs.back()) / hs.back() - 1.0);
  }
  SUBCASE("a = 0, b = 1") {
    const auto res = mc_verify_nelson(solve_linear_embedding(0.0, 1.0, {0.0, 1.0}), 0.5, hs, batch);
    for (const auto& row : res.rows) {
      CHECK(std::abs(row.fit.slope) < 3 * row.fit.slope_se);
      CHECK(std::abs(row.fit.intercept - 1.0) < 3 * row.fit.intercept_se);
    }
  }
  SUBCASE("higher orders are refused") {
    CHECK_THROWS_AS(mc_verify_nelson(solve_linear_embedding(1.0, 0.0, {1.0, 1.0, 1.0}), 0.5, hs, batch),
                    DomainError);
  }
}
