#include "gderiv/chaos_embedding.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <array>
#include <cmath>

#include "gderiv/errors.hpp"

namespace gderiv {

namespace {

using Gauss = boost::math::quadrature::gauss<double, 30>;

void check_order(std::size_t n) {
  if (n > kMaxChaosOrder) throw DomainError("chaos order " + std::to_string(n) + " is not supported (max 3)");
}

// Integral over 0 <= s_n <= ... <= s_{k+1} <= hi of the inner dimensions,
// with s_1..s_k already fixed in `point`.
double nested(const SimplexKernel& f, const SimplexKernel& g, std::size_t n, std::size_t k,
              std::array<double, kMaxChaosOrder>& point, double hi) {
  if (k == n) {
    std::span<const double> s(point.data(), n);
    return f(s) * g(s);
  }
  return Gauss::integrate(
      [&](double x) {
        point[k] = x;
        return nested(f, g, n, k + 1, point, x);
      },
      0.0, hi);
}

std::size_t increments_below(const PathBatch& batch, std::optional<double> upper) {
  if (!batch.dw) throw ContractError("iterated integrals need the Wiener increments");
  if (!upper) return batch.nodes() - 1;
  return batch.node_index(*upper);
}

OrderKernel constant_kernel(double level, double support) {
  return {[level](std::span<const double>) { return level; }, support, level, {}};
}

OrderKernel zero_kernel() { return constant_kernel(0.0, 0.0); }

}  // namespace

double simplex_volume(std::size_t n, double upper) {
  return std::pow(upper, static_cast<double>(n)) / std::tgamma(static_cast<double>(n) + 1.0);
}

double simplex_inner_product(const SimplexKernel& f, const SimplexKernel& g, std::size_t n,
                             double upper, std::span<const double> breakpoints) {
  check_order(n);
  if (!(upper >= 0.0)) throw DomainError("simplex upper limit must be nonnegative");
  std::array<double, kMaxChaosOrder> point{};
  if (n == 0) return f(std::span<const double>()) * g(std::span<const double>());
  std::vector<double> cuts = {0.0};
  for (double b : breakpoints) {
    if (b > 0.0 && b < upper) cuts.push_back(b);
  }
  cuts.push_back(upper);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    if (cuts[k + 1] <= cuts[k]) continue;
    total += Gauss::integrate(
        [&](double x) {
          point[0] = x;
          return nested(f, g, n, 1, point, x);
        },
        cuts[k], cuts[k + 1]);
  }
  return total;
}

Eigen::VectorXd j_integral_samples(std::size_t n, const SimplexKernel& g, const PathBatch& batch,
                                   std::optional<double> upper) {
  check_order(n);
  const std::size_t m = increments_below(batch, upper);
  const auto paths = static_cast<Eigen::Index>(batch.paths());
  const auto& grid = batch.grid;
  if (n == 0) return Eigen::VectorXd::Constant(paths, g(std::span<const double>()));
  const auto M = static_cast<Eigen::Index>(m);
  const auto dw = batch.dw->leftCols(M);
  std::array<double, kMaxChaosOrder> s{};

  if (n == 1) {
    Eigen::VectorXd gv(M);
    for (Eigen::Index i = 0; i < M; ++i) {
      s[0] = grid[i];
      gv(i) = g(std::span<const double>(s.data(), 1));
    }
    return dw * gv;
  }

  if (n == 2) {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(M, M);
    for (Eigen::Index i1 = 0; i1 < M; ++i1) {
      for (Eigen::Index i2 = 0; i2 < i1; ++i2) {
        s[0] = grid[i1];
        s[1] = grid[i2];
        G(i1, i2) = g(std::span<const double>(s.data(), 2));
      }
    }
    RowMatrix inner = dw * G.transpose();
    return dw.cwiseProduct(inner).rowwise().sum();
  }

  Eigen::VectorXd out = Eigen::VectorXd::Zero(paths);
  for (Eigen::Index i1 = 2; i1 < M; ++i1) {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(i1, i1);
    s[0] = grid[i1];
    for (Eigen::Index i2 = 1; i2 < i1; ++i2) {
      s[1] = grid[i2];
      for (Eigen::Index i3 = 0; i3 < i2; ++i3) {
        s[2] = grid[i3];
        G(i2, i3) = g(std::span<const double>(s.data(), 3));
      }
    }
    const auto left = dw.leftCols(i1);
    RowMatrix inner = left * G.transpose();
    out += dw.col(i1).cwiseProduct(left.cwiseProduct(inner).rowwise().sum());
  }
  return out;
}

double j_integral_discrete_norm2(std::size_t n, const SimplexKernel& g, const PathBatch& batch,
                                 std::optional<double> upper) {
  check_order(n);
  const std::size_t m = increments_below(batch, upper);
  const auto& grid = batch.grid;
  auto dt = [&](std::size_t i) { return grid[i + 1] - grid[i]; };
  std::array<double, kMaxChaosOrder> s{};
  if (n == 0) {
    const double v = g(std::span<const double>());
    return v * v;
  }
  double total = 0.0;
  for (std::size_t i1 = 0; i1 < m; ++i1) {
    s[0] = grid[i1];
    if (n == 1) {
      const double v = g(std::span<const double>(s.data(), 1));
      total += v * v * dt(i1);
      continue;
    }
    for (std::size_t i2 = 0; i2 < i1; ++i2) {
      s[1] = grid[i2];
      if (n == 2) {
        const double v = g(std::span<const double>(s.data(), 2));
        total += v * v * dt(i1) * dt(i2);
        continue;
      }
      for (std::size_t i3 = 0; i3 < i2; ++i3) {
        s[2] = grid[i3];
        const double v = g(std::span<const double>(s.data(), 3));
        total += v * v * dt(i1) * dt(i2) * dt(i3);
      }
    }
  }
  return total;
}

ChaosVector combine(const ChaosVector& x, double alpha, const ChaosVector& y) {
  ChaosVector out;
  out.constant = x.constant + alpha * y.constant;
  const std::size_t n = std::max(x.max_order(), y.max_order());
  for (std::size_t k = 0; k < n; ++k) {
    const OrderKernel kx = k < x.max_order() ? x.kernels[k] : zero_kernel();
    const OrderKernel ky = k < y.max_order() ? y.kernels[k] : zero_kernel();
    if (kx.level && ky.level && (kx.support == ky.support || *ky.level == 0.0 || *kx.level == 0.0)) {
      const double support = *ky.level == 0.0 ? kx.support
                              : *kx.level == 0.0 ? ky.support
                                                 : kx.support;
      out.kernels.push_back(constant_kernel(*kx.level + alpha * *ky.level, support));
      continue;
    }
    OrderKernel r;
    r.support = std::max(kx.support, ky.support);
    r.f = [fx = kx.f, fy = ky.f, sx = kx.support, sy = ky.support, alpha](std::span<const double> s) {
      const double a = s[0] <= sx ? fx(s) : 0.0;
      const double b = s[0] <= sy ? fy(s) : 0.0;
      return a + alpha * b;
    };
    r.breakpoints = kx.breakpoints;
    r.breakpoints.insert(r.breakpoints.end(), ky.breakpoints.begin(), ky.breakpoints.end());
    r.breakpoints.push_back(std::min(kx.support, ky.support));
    out.kernels.push_back(std::move(r));
  }
  return out;
}

ChaosVector shift_constant(ChaosVector x, double c) {
  x.constant += c;
  return x;
}

double chaos_inner(const ChaosVector& x, const ChaosVector& y) {
  double total = x.constant * y.constant;
  const std::size_t n = std::min(x.max_order(), y.max_order());
  for (std::size_t k = 0; k < n; ++k) {
    const auto& kx = x.kernels[k];
    const auto& ky = y.kernels[k];
    const double upper = std::min(kx.support, ky.support);
    if (kx.level && ky.level) {
      total += *kx.level * *ky.level * simplex_volume(k + 1, upper);
      continue;
    }
    std::vector<double> cuts = kx.breakpoints;
    cuts.insert(cuts.end(), ky.breakpoints.begin(), ky.breakpoints.end());
    total += simplex_inner_product(kx.f, ky.f, k + 1, upper, cuts);
  }
  return total;
}

double chaos_norm(const ChaosVector& x) { return std::sqrt(std::max(0.0, chaos_inner(x, x))); }

void ChaosProcess::validate() const {
  if (!(horizon > 0.0)) throw DomainError("horizon must be positive");
  if (const auto* cl = std::get_if<ClosedLinear>(&family)) {
    if (cl->c.empty()) throw DomainError("c must contain at least c_0");
    check_order(cl->c.size() - 1);
    for (double v : cl->c) {
      if (!std::isfinite(v)) throw DomainError("c must be finite");
    }
    if (!std::isfinite(cl->a) || !std::isfinite(cl->b)) throw DomainError("a and b must be finite");
  } else {
    const auto& g = std::get<GeneralChaos>(family);
    if (!g.f0) throw DomainError("f_0 is missing");
    check_order(g.orders.size());
    for (const auto& k : g.orders) {
      if (!k.value) throw DomainError("chaos kernel without a value function");
    }
  }
}

std::size_t ChaosProcess::max_order() const {
  if (const auto* cl = std::get_if<ClosedLinear>(&family)) return cl->c.size() - 1;
  return std::get<GeneralChaos>(family).orders.size();
}

double ChaosProcess::mean(double t) const {
  if (const auto* cl = std::get_if<ClosedLinear>(&family)) {
    const double c0 = cl->c.front();
    if (cl->a == 0.0) return c0 + cl->b * t;
    return c0 * std::exp(cl->a * t) - cl->b / cl->a;
  }
  return std::get<GeneralChaos>(family).f0(t);
}

ChaosVector ChaosProcess::at(double t) const {
  if (!(t >= 0.0 && t <= horizon)) throw DomainError("time outside [0,T]");
  ChaosVector out;
  out.constant = mean(t);
  if (const auto* cl = std::get_if<ClosedLinear>(&family)) {
    const double growth = std::exp(cl->a * t);
    for (std::size_t n = 1; n < cl->c.size(); ++n) {
      out.kernels.push_back(constant_kernel(cl->c[n] * growth, t));
    }
    return out;
  }
  for (const auto& k : std::get<GeneralChaos>(family).orders) {
    OrderKernel o;
    o.f = [value = k.value, t](std::span<const double> s) { return value(s, t); };
    o.support = k.adapted ? t : horizon;
    out.kernels.push_back(std::move(o));
  }
  return out;
}

ChaosProcess solve_linear_embedding(double a, double b, std::vector<double> c, double horizon) {
  ChaosProcess x{ClosedLinear{a, b, std::move(c)}, horizon};
  x.validate();
  return x;
}

std::optional<ChaosVector> nelson_derivative(const ChaosProcess& x, double t) {
  x.validate();
  if (!(t >= 0.0 && t <= x.horizon)) throw DomainError("time outside [0,T]");
  ChaosVector out;
  if (const auto* cl = std::get_if<ClosedLinear>(&x.family)) {
    const double growth = std::exp(cl->a * t);
    out.constant = cl->a == 0.0 ? cl->b : cl->a * (cl->c.front() * growth);
    for (std::size_t n = 1; n < cl->c.size(); ++n) {
      out.kernels.push_back(constant_kernel(cl->a * (cl->c[n] * growth), t));
    }
    return out;
  }
  const auto& g = std::get<GeneralChaos>(x.family);
  if (!g.df0) return std::nullopt;
  out.constant = g.df0(t);
  for (const auto& k : g.orders) {
    if (!k.dt) return std::nullopt;
    OrderKernel o;
    o.f = [dt = k.dt, t](std::span<const double> s) { return dt(s, t); };
    o.support = t;
    out.kernels.push_back(std::move(o));
  }
  return out;
}

double embedding_residual(const ChaosProcess& x, double a, double b, double t) {
  const auto d = nelson_derivative(x, t);
  if (!d) throw PreconditionFailed("the process has no t-derivative of its kernels");
  return chaos_norm(shift_constant(combine(*d, -a, x.at(t)), -b));
}

Eigen::VectorXd chaos_samples(const ChaosProcess& x, double t, const PathBatch& batch) {
  const ChaosVector v = x.at(t);
  Eigen::VectorXd out = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(batch.paths()), v.constant);
  for (std::size_t k = 0; k < v.max_order(); ++k) {
    const auto& o = v.kernels[k];
    if (o.level && *o.level == 0.0) continue;
    out += j_integral_samples(k + 1, o.f, batch, o.support);
  }
  return out;
}

NelsonCheck mc_verify_nelson(const ChaosProcess& x, double t, std::span<const double> hs,
                             const PathBatch& w_batch) {
  x.validate();
  const auto* cl = std::get_if<ClosedLinear>(&x.family);
  if (!cl) throw DomainError("Monte Carlo verification needs a closed linear family");
  if (cl->c.size() > 2) throw DomainError("Monte Carlo verification supports chaos order <= 1 only");
  if (hs.empty()) throw DomainError("empty step schedule");
  const RowMatrix w = w_batch.w();
  const double c1 = cl->c.size() > 1 ? cl->c[1] : 0.0;
  auto sample = [&](double s) {
    const auto col = static_cast<Eigen::Index>(w_batch.node_index(s));
    Eigen::VectorXd v = (c1 * std::exp(cl->a * s)) * w.col(col);
    return Eigen::VectorXd(v.array() + x.mean(s));
  };
  const Eigen::VectorXd xt = sample(t);
  NelsonCheck out;
  std::vector<double> q;
  double prev_bias = INFINITY;
  out.bias_monotone = true;
  for (double h : hs) {
    if (!(h > 0.0)) throw DomainError("steps must be positive");
    const Eigen::VectorXd dx = (sample(t + h) - xt) / h;
    NelsonRow row;
    row.h = h;
    row.fit = mc_conditional_expectation(std::span(dx.data(), dx.size()),
                                         std::span(xt.data(), xt.size()), {}, q);
    row.expected_slope = cl->a == 0.0 ? 0.0 : std::expm1(cl->a * h) / h;
    row.expected_intercept = (x.mean(t + h) - x.mean(t)) / h - row.expected_slope * x.mean(t);
    out.max_z = std::max(out.max_z, std::abs(row.fit.slope - row.expected_slope) / row.fit.slope_se);
    const double bias = std::abs(row.expected_slope - cl->a);
    if (bias > prev_bias) out.bias_monotone = false;
    prev_bias = bias;
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace gderiv
