#include "gderiv/simulation.hpp"

#include <fftw3.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstring>
#include <exception>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "gderiv/errors.hpp"

namespace gderiv {

namespace {

constexpr std::size_t kBlockRows = 256;

bool is_uniform_from_zero(const std::vector<double>& grid) {
  if (grid.size() < 2 || grid.front() != 0.0) return false;
  const double dt = grid.back() / static_cast<double>(grid.size() - 1);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (std::abs(grid[i] - dt * static_cast<double>(i)) > 1e-9 * grid.back()) return false;
  }
  return true;
}

void check_hurst(double H) {
  if (!(H > 0.0 && H < 1.0)) throw DomainError("Hurst parameter must lie in (0,1)");
}

// Runs fn(row, count) over blocks of rows. Block boundaries do not depend on
// the thread count, and every path draws from its own generator.
template <class Fn>
void for_each_block(std::size_t rows, unsigned threads, Fn&& fn) {
  const std::size_t blocks = (rows + kBlockRows - 1) / kBlockRows;
  auto run = [&](std::size_t b) {
    const std::size_t row = b * kBlockRows;
    fn(row, std::min(kBlockRows, rows - row));
  };
  if (threads <= 1 || blocks <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) run(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  const unsigned n = static_cast<unsigned>(std::min<std::size_t>(threads, blocks));
  for (unsigned k = 0; k < n; ++k) {
    pool.emplace_back([&] {
      try {
        for (std::size_t b = next++; b < blocks; b = next++) run(b);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

double cell_average(double H, double t, double a, double b) {
  if (H == 0.5) return 1.0;
  thread_local boost::math::quadrature::tanh_sinh<double> quad;
  auto f = [&](double s) { return s <= 0.0 || s >= t ? 0.0 : kernel_KH(H, t, s); };
  return quad.integrate(f, a, b, 1e-11) / (b - a);
}

}  // namespace

struct FftPlan {
  fftw_plan plan = nullptr;
  std::size_t size = 0;
  ~FftPlan() {
    if (plan) fftw_destroy_plan(plan);
  }
};

namespace {

// FFTW's planner is not thread-safe; plans are only made from here.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::shared_ptr<const FftPlan> make_plan(std::size_t m) {
  auto plan = std::make_shared<FftPlan>();
  plan->size = m;
  std::lock_guard lock(planner_mutex());
  auto* in = fftw_alloc_complex(m);
  auto* out = fftw_alloc_complex(m);
  plan->plan = fftw_plan_dft_1d(static_cast<int>(m), in, out, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  if (!plan->plan) throw PreconditionFailed("FFTW could not create a plan");
  return plan;
}

struct FftBuffers {
  explicit FftBuffers(std::size_t m) : in(fftw_alloc_complex(m)), out(fftw_alloc_complex(m)) {}
  ~FftBuffers() {
    fftw_free(in);
    fftw_free(out);
  }
  FftBuffers(const FftBuffers&) = delete;
  FftBuffers& operator=(const FftBuffers&) = delete;
  fftw_complex* in;
  fftw_complex* out;
};

}  // namespace

RowMatrix PathBatch::w() const {
  if (!dw) throw ContractError("batch has no Wiener increments");
  RowMatrix out = RowMatrix::Zero(dw->rows(), dw->cols() + 1);
  for (Eigen::Index p = 0; p < dw->rows(); ++p) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < dw->cols(); ++j) {
      acc += (*dw)(p, j);
      out(p, j + 1) = acc;
    }
  }
  return out;
}

std::size_t PathBatch::node_index(double time) const {
  if (grid.empty()) throw DomainError("empty grid");
  const double tol = 1e-9 * std::max(1.0, std::abs(grid.back()));
  auto it = std::lower_bound(grid.begin(), grid.end(), time - tol);
  if (it == grid.end() || std::abs(*it - time) > tol) {
    throw DomainError("time " + std::to_string(time) + " is not a grid node");
  }
  return static_cast<std::size_t>(it - grid.begin());
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

// seed_seq over six words costs ~10 us per path; a chained splitmix hash of
// the key is as good a seed and cheap enough to build per path.
std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t path) {
  return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ path));
}

const char* to_string(SamplerMethod method) {
  switch (method) {
    case SamplerMethod::cholesky: return "cholesky";
    case SamplerMethod::circulant: return "circulant";
    case SamplerMethod::volterra: return "volterra";
  }
  return "?";
}

const char* to_string(VolterraScheme scheme) {
  return scheme == VolterraScheme::exact_joint ? "exact_joint" : "midpoint";
}

FbmSampler::FbmSampler(SamplerMethod method, double H, std::vector<double> grid,
                       SamplerOptions options)
    : method_(method), H_(H), grid_(std::move(grid)), options_(options) {
  check_hurst(H_);
  if (grid_.empty()) throw DomainError("empty grid");
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (!(grid_[i] >= 0.0) || (i > 0 && !(grid_[i] > grid_[i - 1]))) {
      throw DomainError("grid must be strictly increasing and nonnegative");
    }
  }

  if (method_ == SamplerMethod::cholesky) {
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (grid_[i] > 0.0) positive_.push_back(i);
    }
    const std::size_t n = positive_.size();
    if (n > kCholeskyMaxNodes) throw DomainError("Cholesky sampler limited to 4096 nodes");
    Eigen::MatrixXd cov(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        cov(i, j) = cov(j, i) = fbm_cov(H_, grid_[positive_[i]], grid_[positive_[j]]);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw PreconditionFailed("covariance matrix is not numerically positive definite");
    }
    factor_ = llt.matrixL();
    return;
  }

  if (!is_uniform_from_zero(grid_)) throw DomainError("grid must be uniform and start at 0");
  const std::size_t n = grid_.size() - 1;
  const double dt = grid_.back() / static_cast<double>(n);

  if (method_ == SamplerMethod::circulant) {
    const std::size_t m = 2 * n;
    fft_ = make_plan(m);
    FftBuffers buf(m);
    for (std::size_t k = 0; k < m; ++k) {
      const long long lag = k <= n ? static_cast<long long>(k) : static_cast<long long>(m - k);
      buf.in[k][0] = fgn_autocovariance(H_, lag, dt);
      buf.in[k][1] = 0.0;
    }
    fftw_execute_dft(fft_->plan, buf.in, buf.out);
    double top = 0.0;
    for (std::size_t k = 0; k < m; ++k) top = std::max(top, buf.out[k][0]);
    sqrt_eigen_.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
      double lambda = buf.out[k][0];
      if (lambda < -1e-9 * std::max(1.0, top)) {
        throw PreconditionFailed("circulant embedding has a negative eigenvalue " +
                                 std::to_string(lambda));
      }
      sqrt_eigen_[k] = std::sqrt(std::max(lambda, 0.0) / static_cast<double>(m));
    }
    return;
  }

  // Volterra: B_{t_i} = sum_j A_ij dW_j (+ an independent residual for the
  // exact scheme, which carries the part of B not seen by the cell averages).
  if (n < 32) throw ResolutionError("Volterra sampler needs at least 32 steps");
  kernel_ = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 1; i <= n; ++i) {
    const double t = grid_[i];
    for (std::size_t j = 0; j < i; ++j) {
      if (H_ == 0.5) {
        kernel_(i - 1, j) = 1.0;
      } else if (options_.scheme == VolterraScheme::midpoint) {
        kernel_(i - 1, j) = kernel_KH(H_, t, grid_[j] + 0.5 * dt);
      } else {
        kernel_(i - 1, j) = cell_average(H_, t, grid_[j], grid_[j + 1]);
      }
    }
  }
  if (options_.scheme == VolterraScheme::exact_joint && H_ != 0.5) {
    Eigen::MatrixXd rem(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        rem(i, j) = rem(j, i) = fbm_cov(H_, grid_[i + 1], grid_[j + 1]);
      }
    }
    rem.noalias() -= dt * kernel_ * kernel_.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rem);
    if (eig.info() != Eigen::Success) throw PreconditionFailed("residual eigendecomposition failed");
    Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    residual_ = eig.eigenvectors() * root.asDiagonal();
  }
}

Eigen::MatrixXd FbmSampler::implied_covariance() const {
  if (method_ == SamplerMethod::volterra) {
    const double dt = grid_.back() / static_cast<double>(grid_.size() - 1);
    Eigen::MatrixXd c = dt * kernel_ * kernel_.transpose();
    if (residual_.size() > 0) c.noalias() += residual_ * residual_.transpose();
    return c;
  }
  if (method_ == SamplerMethod::cholesky) return factor_ * factor_.transpose();
  const std::size_t n = grid_.size() - 1;
  Eigen::MatrixXd c(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) c(i, j) = fbm_cov(H_, grid_[i + 1], grid_[j + 1]);
  }
  return c;
}

void FbmSampler::sample_block(std::uint64_t seed, std::uint64_t first_path, std::size_t row,
                              std::size_t count, PathBatch& out) const {
  const auto path_id = [&](std::size_t p) { return first_path + row + p; };

  if (method_ == SamplerMethod::cholesky) {
    const auto n = static_cast<Eigen::Index>(positive_.size());
    RowMatrix z(count, n);
    for (std::size_t p = 0; p < count; ++p) {
      auto rng = path_rng(seed, options_.stream, path_id(p));
      std::normal_distribution<double> normal;
      for (Eigen::Index j = 0; j < n; ++j) z(p, j) = normal(rng);
    }
    RowMatrix vals = z * factor_.transpose();
    for (std::size_t k = 0; k < positive_.size(); ++k) {
      out.b.block(row, positive_[k], count, 1) = vals.col(k);
    }
    return;
  }

  const std::size_t n = grid_.size() - 1;

  if (method_ == SamplerMethod::circulant) {
    const std::size_t m = 2 * n;
    FftBuffers buf(m);
    for (std::size_t p = 0; p < count; ++p) {
      auto rng = path_rng(seed, options_.stream, path_id(p));
      std::normal_distribution<double> normal;
      for (std::size_t k = 0; k < m; ++k) {
        buf.in[k][0] = sqrt_eigen_[k] * normal(rng);
        buf.in[k][1] = sqrt_eigen_[k] * normal(rng);
      }
      fftw_execute_dft(fft_->plan, buf.in, buf.out);
      double acc = 0.0;
      out.b(row + p, 0) = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += buf.out[i][0];
        out.b(row + p, i + 1) = acc;
      }
    }
    return;
  }

  const double sqrt_dt = std::sqrt(grid_.back() / static_cast<double>(n));
  const bool residual = residual_.size() > 0;
  RowMatrix dw(count, n);
  RowMatrix zr(residual ? count : 0, residual ? n : 0);
  for (std::size_t p = 0; p < count; ++p) {
    auto rng = path_rng(seed, options_.stream, path_id(p));
    std::normal_distribution<double> normal;
    for (std::size_t j = 0; j < n; ++j) dw(p, j) = sqrt_dt * normal(rng);
    if (residual) {
      for (std::size_t j = 0; j < n; ++j) zr(p, j) = normal(rng);
    }
  }
  if (H_ == 0.5) {
    for (std::size_t p = 0; p < count; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        acc += dw(p, j);
        out.b(row + p, j + 1) = acc;
      }
    }
  } else {
    RowMatrix vals = dw * kernel_.transpose();
    if (residual) vals.noalias() += zr * residual_.transpose();
    out.b.block(row, 1, count, n) = vals;
  }
  out.dw->block(row, 0, count, n) = dw;
}

PathBatch FbmSampler::sample(std::uint64_t seed, std::uint64_t first_path, std::size_t count) const {
  if (count == 0) throw DomainError("n_paths must be at least 1");
  PathBatch out;
  out.grid = grid_;
  out.b = RowMatrix::Zero(count, grid_.size());
  if (method_ == SamplerMethod::volterra) out.dw = RowMatrix::Zero(count, grid_.size() - 1);
  out.seed = seed;
  out.stream = options_.stream;
  out.first_path = first_path;
  out.method = to_string(method_);
  if (method_ == SamplerMethod::volterra) {
    out.method += std::string("/") + to_string(options_.scheme);
  }
  for_each_block(count, options_.threads, [&](std::size_t row, std::size_t rows) {
    sample_block(seed, first_path, row, rows, out);
  });
  return out;
}

PathBatch sample_fbm(double H, const std::vector<double>& grid, std::size_t n_paths,
                     std::uint64_t seed, SamplerMethod method, SamplerOptions options) {
  return FbmSampler(method, H, grid, options).sample(seed, 0, n_paths);
}

PathBatch sample_fbm_volterra(double H, const std::vector<double>& grid, std::size_t n_paths,
                              std::uint64_t seed, SamplerOptions options) {
  return FbmSampler(SamplerMethod::volterra, H, grid, options).sample(seed, 0, n_paths);
}

DriftSpec::DriftSpec(double H, DifferentiableFunction a, double horizon, std::size_t steps)
    : H_(H), horizon_(horizon), a_(std::move(a)), m_({0.0, 1.0}, {0.0, 0.0}) {
  check_hurst(H_);
  if (!(horizon_ > 0.0)) throw DomainError("horizon must be positive");
  if (steps < 64) throw ResolutionError("drift grid needs at least 64 steps");
  if (!a_.value) throw ContractError("drift integrand has no value function");
  auto grid = uniform_grid(horizon_, steps);
  std::vector<double> av(grid.size());
  zero_ = true;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    av[i] = a_(grid[i]);
    if (!std::isfinite(av[i])) throw DomainError("drift integrand must be bounded on [0,T]");
    zero_ = zero_ && av[i] == 0.0;
  }
  if (zero_) {
    m_ = SampledFunction(grid, std::vector<double>(grid.size(), 0.0));
  } else {
    m_ = apply_KH(H_, SampledFunction(std::move(grid), std::move(av)));
  }
}

DriftSpec DriftSpec::zero(double H, double horizon) {
  return DriftSpec(H, constant_function(0.0), horizon, 64);
}

double DriftSpec::m(double t) const {
  if (t < -1e-12 * horizon_ || t > horizon_ * (1 + 1e-12)) {
    throw DomainError("drift evaluated outside [0,T]");
  }
  return m_(std::clamp(t, 0.0, horizon_));
}

double DriftSpec::mu(double t) const {
  if (zero_) return 0.0;
  const double step = horizon_ / static_cast<double>(m_.size() - 1);
  const double lo = std::max(0.0, t - step);
  const double hi = std::min(horizon_, t + step);
  return (m(hi) - m(lo)) / (hi - lo);
}

DifferentiableFunction DriftSpec::mean_function() const {
  auto self = std::make_shared<const DriftSpec>(*this);
  DifferentiableFunction f;
  f.value = [self](double t) { return self->m(t); };
  f.derivative = [self](double t, Side) -> std::optional<double> { return self->mu(t); };
  f.label = "K_H a";
  return f;
}

PathBatch make_shifted(const PathBatch& batch, const DriftSpec& drift, double x0) {
  PathBatch out = batch;
  RowMatrix z = batch.b;
  for (std::size_t i = 0; i < batch.nodes(); ++i) {
    z.col(static_cast<Eigen::Index>(i)).array() += x0 + drift.m(batch.grid[i]);
  }
  out.z = std::move(z);
  return out;
}

Eigen::VectorXd girsanov_weights(const PathBatch& batch, const DriftSpec& drift) {
  if (!batch.dw) throw ContractError("Girsanov weights need the Wiener increments");
  const std::size_t steps = batch.nodes() - 1;
  Eigen::VectorXd a(steps);
  double quad = 0.0;
  for (std::size_t j = 0; j < steps; ++j) {
    a(j) = drift.a(batch.grid[j]);
    quad += a(j) * a(j) * (batch.grid[j + 1] - batch.grid[j]);
  }
  Eigen::VectorXd exponent = -(*batch.dw * a);
  return (exponent.array() - 0.5 * quad).exp().matrix();
}

double silverman_bandwidth(std::span<const double> y) {
  const std::size_t n = y.size();
  if (n < 2) throw DomainError("bandwidth needs at least two points");
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
}

ConditionalFit mc_conditional_expectation(std::span<const double> x, std::span<const double> y,
                                          const EstimatorSpec& estimator,
                                          std::span<const double> queries) {
  if (x.size() != y.size()) throw DomainError("x and y must have equal length");
  const std::size_t n = x.size();
  if (n < 1000) throw DomainError("conditional expectation needs at least 1000 pairs");
  const double nd = static_cast<double>(n);
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / nd;
  const double xbar = std::accumulate(x.begin(), x.end(), 0.0) / nd;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    syy += (y[i] - ybar) * (y[i] - ybar);
    sxy += (y[i] - ybar) * (x[i] - xbar);
  }
  if (!(syy > 1e-300 * nd)) throw DegenerateVariable("conditioning sample has zero variance");

  ConditionalFit fit;
  fit.kind = estimator.kind;
  fit.query.assign(queries.begin(), queries.end());

  if (estimator.kind == EstimatorKind::linear) {
    fit.slope = sxy / syy;
    fit.intercept = xbar - fit.slope * ybar;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = x[i] - fit.intercept - fit.slope * y[i];
      ssr += r * r;
    }
    const double s = std::sqrt(ssr / (nd - 2.0));
    fit.slope_se = s / std::sqrt(syy);
    fit.intercept_se = s * std::sqrt(1.0 / nd + ybar * ybar / syy);
    for (double q : queries) {
      fit.estimate.push_back(fit.intercept + fit.slope * q);
      fit.standard_error.push_back(s * std::sqrt(1.0 / nd + (q - ybar) * (q - ybar) / syy));
    }
    return fit;
  }

  const double h = estimator.bandwidth ? *estimator.bandwidth : silverman_bandwidth(y);
  if (!(h > 0.0)) throw DomainError("kernel bandwidth must be positive");
  fit.bandwidth = h;
  std::vector<double> w(n);
  for (double q : queries) {
    double sw = 0.0;
    double swx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (y[i] - q) / h;
      w[i] = std::exp(-0.5 * u * u);
      sw += w[i];
      swx += w[i] * x[i];
    }
    if (!(sw > 0.0)) throw PreconditionFailed("no sample mass near the query point");
    const double est = swx / sw;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += w[i] * w[i] * (x[i] - est) * (x[i] - est);
    fit.estimate.push_back(est);
    fit.standard_error.push_back(std::sqrt(var) / sw);
  }
  return fit;
}

McDerivativeResult mc_stochastic_derivative(const PathBatch& batch, double t,
                                            const McConditioning& conditioning,
                                            std::span<const double> hs, double alpha,
                                            std::span<const double> quantile_levels,
                                            std::optional<EstimatorSpec> estimator) {
  if (hs.empty()) throw DomainError("empty step schedule");
  if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
  const RowMatrix& values = batch.z ? *batch.z : batch.b;
  const std::size_t n = batch.paths();
  const std::size_t it = batch.node_index(t);
  const std::size_t is = batch.node_index(conditioning.s);

  std::vector<double> y(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double v = batch.b(p, is);
    y[p] = conditioning.kind == McConditioningKind::absolute ? std::abs(v) : v;
  }
  EstimatorSpec est = estimator.value_or(EstimatorSpec{
      conditioning.kind == McConditioningKind::absolute ? EstimatorKind::kernel
                                                        : EstimatorKind::linear,
      std::nullopt});

  McDerivativeResult result;
  result.quantile_levels.assign(quantile_levels.begin(), quantile_levels.end());
  std::vector<double> sorted = y;
  std::sort(sorted.begin(), sorted.end());
  for (double level : quantile_levels) {
    if (!(level >= 0.0 && level <= 1.0)) throw DomainError("quantile level outside [0,1]");
    const auto k = static_cast<std::size_t>(std::floor(level * static_cast<double>(n - 1)));
    result.query.push_back(sorted[k]);
  }

  std::vector<double> x(n);
  for (double h : hs) {
    if (h == 0.0) throw DomainError("step must be nonzero");
    const std::size_t ih = batch.node_index(t + h);
    const double scale = std::copysign(std::pow(std::abs(h), -alpha), h);
    for (std::size_t p = 0; p < n; ++p) x[p] = (values(p, ih) - values(p, it)) * scale;
    result.rows.push_back({h, mc_conditional_expectation(x, y, est, result.query)});
  }

  for (std::size_t r = 1; r < result.rows.size(); ++r) {
    const auto& a = result.rows[r - 1].fit;
    const auto& b = result.rows[r].fit;
    for (std::size_t q = 0; q < a.estimate.size(); ++q) {
      const double se = std::hypot(a.standard_error[q], b.standard_error[q]);
      const double d = std::abs(a.estimate[q] - b.estimate[q]);
      result.max_jump = std::max(result.max_jump, se > 0.0 ? d / se : (d > 0.0 ? INFINITY : 0.0));
    }
  }
  result.stable = result.max_jump <= 3.0;
  return result;
}

namespace {

void put_double(std::string& line, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  line.append(buf, res.ptr);
}

}  // namespace

void write_csv(const PathBatch& batch, std::ostream& out) {
  out << "path_id,t,W,B,Z,eta\n";
  std::optional<RowMatrix> w;
  if (batch.dw) w = batch.w();
  std::string line;
  for (std::size_t p = 0; p < batch.paths(); ++p) {
    for (std::size_t i = 0; i < batch.nodes(); ++i) {
      line = std::to_string(batch.first_path + p);
      line += ',';
      put_double(line, batch.grid[i]);
      line += ',';
      if (w) put_double(line, (*w)(p, i));
      line += ',';
      put_double(line, batch.b(p, i));
      line += ',';
      if (batch.z) put_double(line, (*batch.z)(p, i));
      line += ',';
      if (batch.eta) put_double(line, (*batch.eta)(p));
      line += '\n';
      out << line;
    }
  }
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  out.write(reinterpret_cast<const char*>(&bits), 8);
}

template <class T>
T get_le(std::istream& in) {
  std::uint64_t bits = 0;
  if (!in.read(reinterpret_cast<char*>(&bits), 8)) throw DomainError("truncated GDRV1 file");
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  T v;
  std::memcpy(&v, &bits, 8);
  return v;
}

constexpr char kMagic[5] = {'G', 'D', 'R', 'V', '1'};

}  // namespace

void write_binary(const PathBatch& batch, std::ostream& out) {
  const std::uint64_t mask = (batch.dw ? 1u : 0u) | 2u | (batch.z ? 4u : 0u) | (batch.eta ? 8u : 0u);
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint64_t>(out, batch.paths());
  put_le<std::uint64_t>(out, batch.nodes());
  put_le<std::uint64_t>(out, mask);
  for (double t : batch.grid) put_le(out, t);
  auto put_matrix = [&](const RowMatrix& m) {
    for (Eigen::Index p = 0; p < m.rows(); ++p) {
      for (Eigen::Index i = 0; i < m.cols(); ++i) put_le(out, m(p, i));
    }
  };
  if (batch.dw) put_matrix(batch.w());
  put_matrix(batch.b);
  if (batch.z) put_matrix(*batch.z);
  if (batch.eta) {
    for (Eigen::Index p = 0; p < batch.eta->size(); ++p) put_le(out, (*batch.eta)(p));
  }
}

PathBatch read_binary(std::istream& in) {
  char magic[5];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DomainError("not a GDRV1 file");
  }
  const auto paths = get_le<std::uint64_t>(in);
  const auto nodes = get_le<std::uint64_t>(in);
  const auto mask = get_le<std::uint64_t>(in);
  if (nodes == 0 || (mask & 2u) == 0 || mask > 15) throw DomainError("malformed GDRV1 header");
  PathBatch batch;
  batch.grid.resize(nodes);
  for (auto& t : batch.grid) t = get_le<double>(in);
  const auto rows = static_cast<Eigen::Index>(paths);
  const auto cols = static_cast<Eigen::Index>(nodes);
  auto get_matrix = [&] {
    RowMatrix m(rows, cols);
    for (Eigen::Index p = 0; p < rows; ++p) {
      for (Eigen::Index i = 0; i < cols; ++i) m(p, i) = get_le<double>(in);
    }
    return m;
  };
  if (mask & 1u) {
    RowMatrix w = get_matrix();
    batch.dw = w.rightCols(cols - 1) - w.leftCols(cols - 1);
  }
  batch.b = get_matrix();
  if (mask & 4u) batch.z = get_matrix();
  if (mask & 8u) {
    Eigen::VectorXd eta(rows);
    for (Eigen::Index p = 0; p < rows; ++p) eta(p) = get_le<double>(in);
    batch.eta = std::move(eta);
  }
  batch.method = "file";
  return batch;
}

}  // namespace gderiv
