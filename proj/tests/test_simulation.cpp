#include <doctest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "gderiv/errors.hpp"
#include "gderiv/simulation.hpp"

using namespace gderiv;

namespace {

struct MomentStat {
  double mean;
  double se;
};

MomentStat product_moment(const RowMatrix& v, std::size_t i, std::size_t j,
                          const Eigen::VectorXd* weights = nullptr) {
  const auto n = static_cast<double>(v.rows());
  double s = 0.0;
  double s2 = 0.0;
  for (Eigen::Index p = 0; p < v.rows(); ++p) {
    double x = v(p, i) * v(p, j);
    if (weights) x *= (*weights)(p);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  return {mean, std::sqrt((s2 / n - mean * mean) / n)};
}

double kernel_integral(double H, double t) {
  boost::math::quadrature::tanh_sinh<double> quad;
  return quad.integrate([&](double s) { return s <= 0 || s >= t ? 0.0 : kernel_KH(H, t, s); }, 0.0, t);
}

}  // namespace

TEST_CASE("path generators are keyed by seed, stream and path") {
  auto a = path_rng(7, 0, 3);
  auto b = path_rng(7, 0, 3);
  auto c = path_rng(7, 1, 3);
  auto d = path_rng(7, 0, 4);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
}

TEST_CASE("batches are reproducible across thread counts and chunking") {
  const auto grid = uniform_grid(1.0, 64);
  for (auto method : {SamplerMethod::cholesky, SamplerMethod::circulant, SamplerMethod::volterra}) {
    CAPTURE(to_string(method));
    FbmSampler serial(method, 0.3, grid, {.stream = 2, .threads = 1});
    FbmSampler parallel(method, 0.3, grid, {.stream = 2, .threads = 3});
    const auto a = serial.sample(11, 0, 700);
    const auto b = parallel.sample(11, 0, 700);
    CHECK(a.b == b.b);
    const auto tail = serial.sample(11, 300, 400);
    CHECK(tail.b == a.b.bottomRows(400));
    if (method == SamplerMethod::volterra) CHECK(*tail.dw == a.dw->bottomRows(400));
  }
}

TEST_CASE("different streams give uncorrelated batches") {
  const auto grid = uniform_grid(1.0, 32);
  const auto a = sample_fbm(0.7, grid, 20000, 5, SamplerMethod::circulant, {.stream = 0});
  const auto b = sample_fbm(0.7, grid, 20000, 5, SamplerMethod::circulant, {.stream = 1});
  const Eigen::VectorXd x = a.b.col(32);
  const Eigen::VectorXd y = b.b.col(32);
  const Eigen::VectorXd prod = x.cwiseProduct(y);
  const double mean = prod.mean();
  const double se = std::sqrt((prod.array() - mean).square().mean() / 20000.0);
  CHECK(std::abs(mean) < 3 * se);
}

TEST_CASE("H = 1/2 increments are white") {
  const auto grid = uniform_grid(1.0, 64);
  const auto batch = sample_fbm(0.5, grid, 20000, 1, SamplerMethod::circulant);
  const double dt = 1.0 / 64;
  Eigen::VectorXd d1 = batch.b.col(11) - batch.b.col(10);
  Eigen::VectorXd d2 = batch.b.col(12) - batch.b.col(11);
  const Eigen::VectorXd prod = d1.cwiseProduct(d2);
  const double se = std::sqrt((prod.array() - prod.mean()).square().mean() / 20000.0);
  CHECK(std::abs(prod.mean()) < 3 * se);
  CHECK(d1.squaredNorm() / 20000.0 == doctest::Approx(dt).epsilon(0.05));
}

TEST_CASE("every sampler matches the fBm covariance on a probe") {
  const auto grid = uniform_grid(1.0, 64);
  const std::vector<std::size_t> probe = {16, 32, 48, 64};
  std::uint64_t seed = 100;
  for (double H : {0.3, 0.5, 0.7}) {
    for (auto method : {SamplerMethod::cholesky, SamplerMethod::circulant, SamplerMethod::volterra}) {
      CAPTURE(H);
      CAPTURE(to_string(method));
      const auto batch = sample_fbm(H, grid, 20000, seed++, method);
      for (std::size_t a = 0; a < probe.size(); ++a) {
        for (std::size_t b = a; b < probe.size(); ++b) {
          const auto m = product_moment(batch.b, probe[a], probe[b]);
          const double target = fbm_cov(H, grid[probe[a]], grid[probe[b]]);
          CHECK(std::abs(m.mean - target) < 3 * m.se);
        }
      }
    }
  }
}

TEST_CASE("H = 0.7 Cov(B_.25, B_.75) with 200k paths") {
  const auto grid = uniform_grid(1.0, 64);
  const auto batch = sample_fbm(0.7, grid, 200000, 42, SamplerMethod::circulant);
  const auto m = product_moment(batch.b, 16, 48);
  const double target = 0.5 * (std::pow(0.25, 1.4) + std::pow(0.75, 1.4) - std::pow(0.5, 1.4));
  CHECK(std::abs(m.mean - target) < 3 * m.se);
}

TEST_CASE("Cholesky and circulant agree") {
  const auto grid = uniform_grid(1.0, 32);
  const auto a = sample_fbm(0.3, grid, 50000, 3, SamplerMethod::cholesky);
  const auto b = sample_fbm(0.3, grid, 50000, 4, SamplerMethod::circulant);
  for (std::size_t j : {8, 20, 32}) {
    const auto ma = product_moment(a.b, 8, j);
    const auto mb = product_moment(b.b, 8, j);
    CHECK(std::abs(ma.mean - mb.mean) < 3 * std::hypot(ma.se, mb.se));
  }
}

TEST_CASE("Cholesky accepts non-uniform grids and keeps B_0 = 0") {
  const std::vector<double> grid = {0.0, 0.1, 0.35, 0.9};
  const auto batch = sample_fbm(0.6, grid, 10, 1, SamplerMethod::cholesky);
  CHECK(batch.b.col(0).isZero());
  FbmSampler s(SamplerMethod::cholesky, 0.6, grid);
  const auto c = s.implied_covariance();
  CHECK(c(1, 2) == doctest::Approx(fbm_cov(0.6, 0.35, 0.9)));
}

TEST_CASE("sampler argument checks") {
  const auto grid = uniform_grid(1.0, 64);
  CHECK_THROWS_AS(FbmSampler(SamplerMethod::cholesky, 1.0, grid), DomainError);
  CHECK_THROWS_AS(FbmSampler(SamplerMethod::circulant, 0.5, {0.0, 0.2, 0.3}), DomainError);
  CHECK_THROWS_AS(FbmSampler(SamplerMethod::cholesky, 0.5, {0.0, 0.3, 0.2}), DomainError);
  CHECK_THROWS_AS(FbmSampler(SamplerMethod::volterra, 0.7, uniform_grid(1.0, 16)), ResolutionError);
  CHECK_THROWS_AS(FbmSampler(SamplerMethod::cholesky, 0.5, uniform_grid(1.0, 4097)), DomainError);
  CHECK_THROWS_AS(sample_fbm(0.5, grid, 0, 1, SamplerMethod::cholesky), DomainError);
}

TEST_CASE("Volterra at H = 1/2 is the cumulative sum of the increments") {
  const auto grid = uniform_grid(1.0, 32);
  const auto batch = sample_fbm_volterra(0.5, grid, 50, 9);
  REQUIRE(batch.dw);
  const RowMatrix w = batch.w();
  CHECK((w - batch.b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exact joint Volterra scheme reproduces the covariance") {
  const auto grid = uniform_grid(1.0, 64);
  FbmSampler s(SamplerMethod::volterra, 0.3, grid);
  const auto c = s.implied_covariance();
  double err = 0.0;
  for (int i = 0; i < 64; ++i) {
    for (int j = 0; j < 64; ++j) err = std::max(err, std::abs(c(i, j) - fbm_cov(0.3, grid[i + 1], grid[j + 1])));
  }
  CHECK(err < 1e-9);
}

TEST_CASE("midpoint Volterra bias is small and shrinks with resolution") {
  SamplerOptions mid{.scheme = VolterraScheme::midpoint};
  FbmSampler coarse(SamplerMethod::volterra, 0.7, uniform_grid(1.0, 256), mid);
  FbmSampler fine(SamplerMethod::volterra, 0.7, uniform_grid(1.0, 512), mid);
  const double bias_coarse = std::abs(coarse.implied_covariance()(255, 255) - 1.0);
  const double bias_fine = std::abs(fine.implied_covariance()(511, 511) - 1.0);
  CHECK(bias_coarse < 0.01);
  CHECK(bias_fine < bias_coarse);

  const auto batch = coarse.sample(8, 0, 20000);
  const auto m = product_moment(batch.b, 256, 256);
  CHECK(std::abs(m.mean - 1.0) < 3 * m.se + bias_coarse);
}

TEST_CASE("drift from the Volterra operator") {
  SUBCASE("zero integrand") {
    const auto d = DriftSpec::zero(0.3, 1.0);
    CHECK(d.is_zero());
    CHECK(d.m(0.4) == 0.0);
    CHECK(d.mu(0.4) == 0.0);
  }
  SUBCASE("H = 1/2 integrates") {
    DriftSpec d(0.5, constant_function(1.0), 1.0, 256);
    CHECK(d.m(0.3) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(d.mu(0.3) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("H = 0.7 matches kernel quadrature") {
    DriftSpec d(0.7, constant_function(1.0), 1.0, 1024);
    for (double t : {0.25, 0.5, 1.0}) CHECK(std::abs(d.m(t) - kernel_integral(0.7, t)) < 1e-3);
    const double h = 1e-4;
    const double fd = (kernel_integral(0.7, 0.5 + h) - kernel_integral(0.7, 0.5 - h)) / (2 * h);
    CHECK(d.mu(0.5) == doctest::Approx(fd).epsilon(1e-3));
  }
  SUBCASE("evaluation outside the horizon") {
    DriftSpec d(0.5, constant_function(1.0), 1.0, 64);
    CHECK_THROWS_AS(d.m(1.5), DomainError);
    CHECK_THROWS_AS(DriftSpec(0.5, constant_function(1.0), 1.0, 8), ResolutionError);
  }
  SUBCASE("mean function") {
    DriftSpec d(0.5, linear_function(2.0), 1.0, 256);
    const auto f = d.mean_function();
    CHECK(f(0.5) == doctest::Approx(0.25).epsilon(1e-4));
    CHECK(*f.derivative_at(0.5, Side::right) == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("shifted batches") {
  const auto grid = uniform_grid(1.0, 64);
  const auto batch = sample_fbm_volterra(0.5, grid, 20000, 4);
  const auto zero = make_shifted(batch, DriftSpec::zero(0.5, 1.0), 2.0);
  CHECK((zero.z->array() - batch.b.array() - 2.0).abs().maxCoeff() < 1e-15);

  DriftSpec d(0.5, constant_function(1.0), 1.0, 256);
  const auto z = make_shifted(batch, d, 1.0);
  const Eigen::VectorXd col = z.z->col(32).array() - 1.0;
  const double se = std::sqrt((col.array() - col.mean()).square().mean() / 20000.0);
  CHECK(std::abs(col.mean() - 0.5) < 3 * se);
}

TEST_CASE("Girsanov weights") {
  const auto grid = uniform_grid(1.0, 64);
  const auto batch = sample_fbm_volterra(0.7, grid, 20000, 21);
  const auto zero = girsanov_weights(batch, DriftSpec::zero(0.7, 1.0));
  CHECK((zero.array() == 1.0).all());

  DriftSpec d(0.7, constant_function(1.0), 1.0, 1024);
  const auto eta = girsanov_weights(batch, d);
  const double se = std::sqrt((eta.array() - eta.mean()).square().mean() / 20000.0);
  CHECK(std::abs(eta.mean() - 1.0) < 3 * se);

  const auto z = make_shifted(batch, d);
  const auto weighted = product_moment(*z.z, 16, 48, &eta);
  const auto plain = product_moment(*z.z, 16, 48);
  const double target = fbm_cov(0.7, 0.25, 0.75);
  CHECK(std::abs(weighted.mean - target) < 3 * weighted.se);
  CHECK(std::abs(plain.mean - target) > 3 * plain.se);

  const auto chol = sample_fbm(0.7, grid, 10, 1, SamplerMethod::cholesky);
  CHECK_THROWS_AS(girsanov_weights(chol, d), ContractError);
}

TEST_CASE("conditional expectation estimators") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  const std::size_t n = 20000;
  std::vector<double> x(n), y(n), noise(n), indep(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = normal(rng);
    noise[i] = normal(rng);
    x[i] = 0.6 * y[i] + 0.8 * noise[i];
    indep[i] = 1.5 + normal(rng);
  }
  const std::vector<double> q = {-1.0, 0.0, 1.0};

  SUBCASE("Gaussian regression slope") {
    const auto fit = mc_conditional_expectation(x, y, {}, q);
    CHECK(std::abs(fit.slope - 0.6) < 3 * fit.slope_se);
    CHECK(std::abs(fit.intercept) < 3 * fit.intercept_se);
    for (std::size_t k = 0; k < q.size(); ++k) {
      CHECK(std::abs(fit.estimate[k] - 0.6 * q[k]) < 3 * fit.standard_error[k]);
    }
  }
  SUBCASE("kernel estimator recovers a quadratic") {
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = y[i] * y[i] + noise[i];
    const std::vector<double> qk = {0.0, 0.5, 1.0};
    const auto fit = mc_conditional_expectation(sq, y, {EstimatorKind::kernel, 0.05}, qk);
    CHECK(fit.bandwidth == 0.05);
    for (std::size_t k = 0; k < qk.size(); ++k) {
      // smoothing adds h^2 to E[y^2 | y = q]
      CHECK(std::abs(fit.estimate[k] - qk[k] * qk[k] - 0.0025) < 3 * fit.standard_error[k]);
    }
  }
  SUBCASE("independent data give a flat map") {
    double mean = 0.0;
    for (double v : indep) mean += v / n;
    const auto lin = mc_conditional_expectation(indep, y, {}, q);
    CHECK(std::abs(lin.slope) < 3 * lin.slope_se);
    const auto ker = mc_conditional_expectation(indep, y, {EstimatorKind::kernel, {}}, q);
    CHECK(ker.bandwidth == doctest::Approx(silverman_bandwidth(y)));
    for (std::size_t k = 0; k < q.size(); ++k) {
      CHECK(std::abs(ker.estimate[k] - mean) < 3 * ker.standard_error[k]);
    }
  }
  SUBCASE("errors") {
    std::vector<double> small(999, 1.0);
    CHECK_THROWS_AS(mc_conditional_expectation(small, small, {}, q), DomainError);
    std::vector<double> flat(2000, 1.0);
    CHECK_THROWS_AS(mc_conditional_expectation(flat, flat, {}, q), DegenerateVariable);
    CHECK_THROWS_AS(mc_conditional_expectation(x, y, {EstimatorKind::kernel, -1.0}, q), DomainError);
    CHECK_THROWS_AS(mc_conditional_expectation(std::span(x).first(1500), y, {}, q), DomainError);
  }
}

TEST_CASE("Monte Carlo derivative at H = 1/2 conditioned on the endpoint") {
  // Brownian increments after t are independent of B_s for s < t.
  const auto grid = uniform_grid(1.0, 64);
  const auto batch = sample_fbm(0.5, grid, 20000, 77, SamplerMethod::cholesky);
  const std::vector<double> hs = {4.0 / 64, 2.0 / 64, 1.0 / 64};
  const std::vector<double> levels = {0.25, 0.5, 0.75};
  const auto res = mc_stochastic_derivative(batch, 0.5, {McConditioningKind::value, 0.25}, hs, 1.0, levels);
  REQUIRE(res.rows.size() == 3);
  CHECK(res.query.size() == 3);
  for (const auto& row : res.rows) CHECK(std::abs(row.fit.slope) < 3 * row.fit.slope_se);
  CHECK_THROWS_AS(mc_stochastic_derivative(batch, 0.51, {McConditioningKind::value, 0.25}, hs, 1.0, levels),
                  DomainError);
}

TEST_CASE("batch export round trips") {
  const auto grid = uniform_grid(1.0, 32);
  auto batch = sample_fbm_volterra(0.7, grid, 5, 3);
  DriftSpec d(0.7, constant_function(1.0), 1.0, 256);
  batch = make_shifted(batch, d, 0.5);
  batch.eta = girsanov_weights(batch, d);

  std::stringstream bin;
  write_binary(batch, bin);
  const auto back = read_binary(bin);
  CHECK(back.grid == batch.grid);
  CHECK(back.b == batch.b);
  CHECK(*back.z == *batch.z);
  CHECK(*back.eta == *batch.eta);
  CHECK((*back.dw - *batch.dw).cwiseAbs().maxCoeff() < 1e-14);

  std::stringstream csv;
  write_csv(batch, csv);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "path_id,t,W,B,Z,eta");
  std::size_t lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  CHECK(lines == 5 * 33);

  std::stringstream bad("GDRV2xxxxxxxx");
  CHECK_THROWS_AS(read_binary(bad), DomainError);
}
