#pragma once

// Monte Carlo layer: fBm samplers, drift and Girsanov weights, conditional
// expectation estimators and batch export.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gderiv/covariance_models.hpp"
#include "gderiv/fractional.hpp"

namespace gderiv {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Paths on a common time grid. Row p is path first_path + p.
struct PathBatch {
  std::vector<double> grid;
  RowMatrix b;                   // centered process, paths x nodes
  std::optional<RowMatrix> dw;   // Wiener increments, paths x (nodes - 1)
  std::optional<RowMatrix> z;    // shifted process
  std::optional<Eigen::VectorXd> eta;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t first_path = 0;
  std::string method;

  std::size_t paths() const noexcept { return static_cast<std::size_t>(b.rows()); }
  std::size_t nodes() const noexcept { return grid.size(); }
  /// Wiener paths (cumulative increments, W_0 = 0). Requires dw.
  RowMatrix w() const;
  /// Column index of a grid time (tolerance 1e-9 * T); throws DomainError.
  std::size_t node_index(double time) const;
};

/// Generator for path `path` of a (seed, stream) pair. Independent of how
/// paths are split across threads or chunks.
std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t path);

enum class SamplerMethod { cholesky, circulant, volterra };
enum class VolterraScheme { exact_joint, midpoint };

const char* to_string(SamplerMethod method);
const char* to_string(VolterraScheme scheme);

struct SamplerOptions {
  std::uint64_t stream = 0;
  unsigned threads = 1;
  VolterraScheme scheme = VolterraScheme::exact_joint;
};

inline constexpr std::size_t kCholeskyMaxNodes = 4096;

struct FftPlan;

/// Precomputed sampler for one (method, H, grid). Cholesky accepts any
/// increasing grid of times >= 0 with at most 4096 positive nodes (O(n^3)
/// setup, O(n^2) per path); circulant and Volterra need a uniform grid from 0.
class FbmSampler {
 public:
  FbmSampler(SamplerMethod method, double H, std::vector<double> grid, SamplerOptions options = {});

  /// Paths first_path .. first_path + count - 1.
  PathBatch sample(std::uint64_t seed, std::uint64_t first_path, std::size_t count) const;

  SamplerMethod method() const noexcept { return method_; }
  const std::vector<double>& grid() const noexcept { return grid_; }
  /// Covariance of the sampled values on the positive grid nodes implied by
  /// the construction (equal to R_H except for the midpoint Volterra scheme).
  Eigen::MatrixXd implied_covariance() const;

 private:
  void sample_block(std::uint64_t seed, std::uint64_t first_path, std::size_t row,
                    std::size_t count, PathBatch& out) const;

  SamplerMethod method_;
  double H_;
  std::vector<double> grid_;
  SamplerOptions options_;
  std::vector<std::size_t> positive_;  // cholesky: grid columns with t > 0
  Eigen::MatrixXd factor_;             // cholesky lower factor
  std::vector<double> sqrt_eigen_;     // circulant
  std::shared_ptr<const FftPlan> fft_;
  Eigen::MatrixXd kernel_;             // volterra weights, n x n
  Eigen::MatrixXd residual_;           // volterra residual factor (empty if none)
};

PathBatch sample_fbm(double H, const std::vector<double>& grid, std::size_t n_paths,
                     std::uint64_t seed, SamplerMethod method, SamplerOptions options = {});

PathBatch sample_fbm_volterra(double H, const std::vector<double>& grid, std::size_t n_paths,
                              std::uint64_t seed, SamplerOptions options = {});

/// Deterministic drift m = K_H a of the shifted process Z = x0 + B + m.
class DriftSpec {
 public:
  static constexpr std::size_t kDefaultSteps = 4096;

  DriftSpec(double H, DifferentiableFunction a, double horizon, std::size_t steps = kDefaultSteps);
  static DriftSpec zero(double H, double horizon);

  double H() const noexcept { return H_; }
  double horizon() const noexcept { return horizon_; }
  double a(double t) const { return a_(t); }
  /// m(t), linear interpolation of K_H a on the fine grid.
  double m(double t) const;
  /// m'(t) by central differences with the fine-grid step.
  double mu(double t) const;
  const SampledFunction& m_samples() const noexcept { return m_; }
  const DifferentiableFunction& integrand() const noexcept { return a_; }
  bool is_zero() const noexcept { return zero_; }
  /// m as a model mean (derivative mu on every side).
  DifferentiableFunction mean_function() const;

 private:
  double H_;
  double horizon_;
  DifferentiableFunction a_;
  SampledFunction m_;
  bool zero_ = false;
};

/// Adds x0 + m(grid) to the centered values.
PathBatch make_shifted(const PathBatch& batch, const DriftSpec& drift, double x0 = 0.0);

/// eta = exp(-sum a(s_j) dW_j - 1/2 sum a(s_j)^2 ds_j) with left points s_j.
/// Throws ContractError without Wiener increments.
Eigen::VectorXd girsanov_weights(const PathBatch& batch, const DriftSpec& drift);

enum class EstimatorKind { linear, kernel };

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::linear;
  /// Kernel bandwidth; Silverman's rule when unset.
  std::optional<double> bandwidth;
};

struct ConditionalFit {
  EstimatorKind kind = EstimatorKind::linear;
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double intercept_se = 0.0;
  double bandwidth = 0.0;
  std::vector<double> query;
  std::vector<double> estimate;
  std::vector<double> standard_error;
};

/// 1.06 * sd(y) * n^{-1/5}
double silverman_bandwidth(std::span<const double> y);

/// Estimates E[x | y] at the query points: OLS of x on (1, y), or
/// Nadaraya-Watson with a Gaussian kernel. Needs >= 1000 pairs.
ConditionalFit mc_conditional_expectation(std::span<const double> x, std::span<const double> y,
                                          const EstimatorSpec& estimator,
                                          std::span<const double> queries);

enum class McConditioningKind {
  value,     // sigma{Z_s}, realized as sigma{B_s} (drift is deterministic)
  absolute,  // sigma{|B_s|}
};

struct McConditioning {
  McConditioningKind kind = McConditioningKind::value;
  double s = 0.0;
};

struct McDerivativeRow {
  double h;
  ConditionalFit fit;
};

struct McDerivativeResult {
  std::vector<double> quantile_levels;
  std::vector<double> query;
  std::vector<McDerivativeRow> rows;
  /// Largest |difference| / combined SE between estimates at successive h.
  double max_jump = 0.0;
  bool stable = false;
};

/// For each h: estimate |h|^{-alpha} E[Z_{t+h} - Z_t | conditioning] at empirical
/// quantiles of the conditioning variable. t, t+h and s must be grid nodes.
/// Uses z when present, b otherwise. Linear estimator for `value`, kernel for
/// `absolute` unless overridden.
McDerivativeResult mc_stochastic_derivative(const PathBatch& batch, double t,
                                            const McConditioning& conditioning,
                                            std::span<const double> hs, double alpha,
                                            std::span<const double> quantile_levels,
                                            std::optional<EstimatorSpec> estimator = std::nullopt);

/// path_id,t,W,B,Z,eta; absent fields are left empty.
void write_csv(const PathBatch& batch, std::ostream& out);

/// "GDRV1", u64 n_paths, u64 n_nodes, u64 field mask (1 W, 2 B, 4 Z, 8 eta),
/// f64 grid[n_nodes], then each present field path-major; eta is f64[n_paths].
/// Little-endian throughout.
void write_binary(const PathBatch& batch, std::ostream& out);
PathBatch read_binary(std::istream& in);

}  // namespace gderiv
