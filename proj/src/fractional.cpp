#include "gderiv/fractional.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gderiv/covariance_models.hpp"
#include "gderiv/errors.hpp"

namespace gderiv {

SampledFunction::SampledFunction(std::vector<double> grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (grid_.size() != values_.size()) {
    throw DomainError("sampled function: grid and values differ in length");
  }
  if (grid_.empty()) throw DomainError("sampled function: empty grid");
  for (std::size_t i = 1; i < grid_.size(); ++i) {
    if (!(grid_[i] > grid_[i - 1])) throw DomainError("sampled function: grid must increase");
  }
}

SampledFunction SampledFunction::from(const std::function<double(double)>& f,
                                      std::vector<double> grid) {
  std::vector<double> values(grid.size());
  std::transform(grid.begin(), grid.end(), values.begin(), f);
  return SampledFunction(std::move(grid), std::move(values));
}

double SampledFunction::operator()(double x) const {
  if (x <= grid_.front()) return values_.front();
  if (x >= grid_.back()) return values_.back();
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), x);
  const auto j = static_cast<std::size_t>(it - grid_.begin()) - 1;
  const double w = (x - grid_[j]) / (grid_[j + 1] - grid_[j]);
  return values_[j] + w * (values_[j + 1] - values_[j]);
}

std::vector<double> uniform_grid(double horizon, std::size_t steps) {
  if (steps == 0 || !(horizon > 0.0)) throw DomainError("uniform grid needs steps >= 1, T > 0");
  std::vector<double> grid(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    grid[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
  }
  return grid;
}

namespace {

// Segments whose left end lies below this many first-cell widths are
// integrated exactly against y^beta.
constexpr double kExactCells = 64.0;

void check_exponents(double alpha, double beta) {
  if (!(alpha > 0.0)) throw DomainError("fractional integral: alpha must be > 0");
  if (!(beta > -1.0)) throw DomainError("fractional integral: beta must be > -1");
}

double origin_limit(double alpha, double beta, double p0) {
  const double order = alpha + beta;
  if (order > 1e-12) return 0.0;
  if (order >= -1e-12) return p0 * std::tgamma(beta + 1.0);
  throw DomainError("fractional integral diverges at the origin (alpha + beta < 0)");
}

// int_a^b (x-y)^{alpha-1} y^beta (pa + slope (y-a)) dy via incomplete beta.
double exact_segment(double alpha, double beta, double x, double a, double b, double pa,
                     double slope) {
  auto piece = [&](double gamma) {
    const double hi = boost::math::beta(gamma + 1.0, alpha, std::min(b / x, 1.0));
    const double lo = a > 0.0 ? boost::math::beta(gamma + 1.0, alpha, a / x) : 0.0;
    return std::pow(x, alpha + gamma) * (hi - lo);
  };
  return (pa - slope * a) * piece(beta) + slope * piece(beta + 1.0);
}

// int_a^b (x-y)^{alpha-1} q(y) dy for q linear with q(a)=qa, q(b)=qb, given
// the powers (x-a)^alpha, (x-b)^alpha, (x-a)^{alpha+1}, (x-b)^{alpha+1}.
double linear_segment(double alpha, double ua, double ua_pow, double ub_pow, double ua_pow1,
                      double ub_pow1, double qa, double qb, double width) {
  const double m0 = (ua_pow - ub_pow) / alpha;
  const double m1 = ua * m0 - (ua_pow1 - ub_pow1) / (alpha + 1.0);
  return qa * m0 + (qb - qa) / width * m1;
}

void check_origin_grid(const std::vector<double>& grid) {
  if (grid.front() != 0.0) throw DomainError("fractional integral: grid must start at 0");
  if (grid.size() < 2) throw ResolutionError("fractional integral: need at least 2 nodes");
}

// Fractional integral at every node of the grid.
std::vector<double> integrate_nodes(double alpha, double beta, const std::vector<double>& grid,
                                    const std::vector<double>& p) {
  check_exponents(alpha, beta);
  check_origin_grid(grid);
  const std::size_t n = grid.size();
  const double exact_limit = beta == 0.0 ? 0.0 : kExactCells * grid[1];

  std::vector<double> q(n);
  for (std::size_t j = 0; j < n; ++j) {
    q[j] = beta == 0.0 ? p[j] : (grid[j] > 0.0 ? std::pow(grid[j], beta) * p[j] : 0.0);
  }

  const double step = grid[1];
  bool uniform = true;
  for (std::size_t i = 1; i < n && uniform; ++i) {
    uniform = std::abs(grid[i] - static_cast<double>(i) * step) <= 1e-12 * grid.back();
  }
  std::vector<double> pow_a;
  std::vector<double> pow_a1;
  if (uniform) {
    pow_a.resize(n);
    pow_a1.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double u = static_cast<double>(k) * step;
      pow_a[k] = std::pow(u, alpha);
      pow_a1[k] = std::pow(u, alpha + 1.0);
    }
  }

  const double inv_gamma = 1.0 / std::tgamma(alpha);
  std::vector<double> out(n);
  out[0] = origin_limit(alpha, beta, p[0]);
  for (std::size_t i = 1; i < n; ++i) {
    const double x = grid[i];
    double sum = 0.0;
    for (std::size_t j = 0; j < i; ++j) {
      const double a = grid[j];
      const double b = grid[j + 1];
      const double width = b - a;
      if (beta != 0.0 && a < exact_limit) {
        sum += exact_segment(alpha, beta, x, a, b, p[j], (p[j + 1] - p[j]) / width);
        continue;
      }
      if (uniform) {
        const std::size_t ka = i - j;
        const std::size_t kb = i - j - 1;
        sum += linear_segment(alpha, static_cast<double>(ka) * step, pow_a[ka], pow_a[kb],
                              pow_a1[ka], pow_a1[kb], q[j], q[j + 1], width);
      } else {
        const double ua = x - a;
        const double ub = x - b;
        sum += linear_segment(alpha, ua, std::pow(ua, alpha), std::pow(ub, alpha),
                              std::pow(ua, alpha + 1.0), std::pow(ub, alpha + 1.0), q[j], q[j + 1],
                              width);
      }
    }
    out[i] = sum * inv_gamma;
  }
  return out;
}

}  // namespace

double weighted_frac_integral(double alpha, double beta, const SampledFunction& p, double x) {
  check_exponents(alpha, beta);
  const auto& grid = p.grid();
  const auto& v = p.values();
  check_origin_grid(grid);
  if (x < 0.0 || x > grid.back() * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "fractional integral: x = " << x << " outside grid [0, " << grid.back() << "]";
    throw DomainError(msg.str());
  }
  if (x == 0.0) return origin_limit(alpha, beta, v[0]);

  const double exact_limit = beta == 0.0 ? 0.0 : kExactCells * grid[1];
  auto weighted = [&](double y, double value) {
    return beta == 0.0 ? value : std::pow(y, beta) * value;
  };

  double sum = 0.0;
  for (std::size_t j = 0; j + 1 < grid.size() && grid[j] < x; ++j) {
    const double a = grid[j];
    const double b = std::min(grid[j + 1], x);
    const double pa = v[j];
    const double pb = grid[j + 1] <= x ? v[j + 1] : p(x);
    const double width = b - a;
    if (!(width > 0.0)) continue;
    if (beta != 0.0 && a < exact_limit) {
      sum += exact_segment(alpha, beta, x, a, b, pa, (pb - pa) / width);
    } else {
      const double ua = x - a;
      const double ub = x - b;
      sum += linear_segment(alpha, ua, std::pow(ua, alpha), std::pow(ub, alpha),
                            std::pow(ua, alpha + 1.0), std::pow(ub, alpha + 1.0),
                            weighted(a, pa), weighted(b, pb), width);
    }
  }
  return sum / std::tgamma(alpha);
}

double frac_integral(double alpha, const SampledFunction& f, double x) {
  return weighted_frac_integral(alpha, 0.0, f, x);
}

SampledFunction apply_KH(double H, const SampledFunction& h, std::size_t min_nodes) {
  if (!(H > 0.0 && H < 1.0)) throw DomainError("apply_KH: H must lie in (0,1)");
  const auto& grid = h.grid();
  if (grid.size() < min_nodes) {
    std::ostringstream msg;
    msg << "apply_KH: grid has " << grid.size() << " nodes, need at least " << min_nodes;
    throw ResolutionError(msg.str());
  }
  check_origin_grid(grid);

  std::vector<double> out;
  if (H == 0.5) {
    out = integrate_nodes(1.0, 0.0, grid, h.values());
  } else if (H < 0.5) {
    // I^{2H} s^{1/2-H} I^{1/2-H} s^{H-1/2} h
    const auto inner = integrate_nodes(0.5 - H, H - 0.5, grid, h.values());
    out = integrate_nodes(2.0 * H, 0.5 - H, grid, inner);
  } else {
    // I^1 s^{H-1/2} I^{H-1/2} s^{1/2-H} h
    const auto inner = integrate_nodes(H - 0.5, 0.5 - H, grid, h.values());
    out = integrate_nodes(1.0, H - 0.5, grid, inner);
  }
  const double c = kernel_normalization(H);
  for (auto& v : out) v *= c;
  return SampledFunction(grid, std::move(out));
}

}  // namespace gderiv
