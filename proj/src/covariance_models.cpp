#include "gderiv/covariance_models.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "gderiv/errors.hpp"
#include "gderiv/special_functions.hpp"

namespace gderiv {

std::optional<double> DifferentiableFunction::derivative_at(double t, Side side) const {
  if (!derivative) return std::nullopt;
  if (side != Side::two_sided) return derivative(t, side);
  const auto both = derivative(t, Side::two_sided);
  if (both) return both;
  const auto left = derivative(t, Side::left);
  const auto right = derivative(t, Side::right);
  if (left && right && std::abs(*left - *right) <= 1e-12 * std::max(1.0, std::abs(*left))) {
    return 0.5 * (*left + *right);
  }
  return std::nullopt;
}

DifferentiableFunction constant_function(double c) {
  std::ostringstream label;
  label << c;
  return {[c](double) { return c; }, [](double, Side) { return std::optional<double>(0.0); },
          label.str()};
}

DifferentiableFunction linear_function(double slope, double intercept) {
  std::ostringstream label;
  label << slope << "*t";
  if (intercept != 0.0) label << "+" << intercept;
  return {[slope, intercept](double t) { return slope * t + intercept; },
          [slope](double, Side) { return std::optional<double>(slope); }, label.str()};
}

DifferentiableFunction power_abs(double center, double exponent) {
  if (!(exponent > 0.0)) throw DomainError("power_abs: exponent must be > 0");
  std::ostringstream label;
  label << "|t-" << center << "|^" << exponent;
  auto value = [center, exponent](double t) { return std::pow(std::abs(t - center), exponent); };
  auto derivative = [center, exponent](double t, Side side) -> std::optional<double> {
    const double d = t - center;
    if (d != 0.0) {
      const double sign = d > 0.0 ? 1.0 : -1.0;
      return sign * exponent * std::pow(std::abs(d), exponent - 1.0);
    }
    if (exponent > 1.0) return 0.0;
    if (exponent == 1.0 && side != Side::two_sided) return side == Side::right ? 1.0 : -1.0;
    return std::nullopt;
  };
  return {value, derivative, label.str()};
}

DifferentiableFunction exponential_function(double scale, double rate) {
  std::ostringstream label;
  label << scale << "*exp(" << rate << "*t)";
  return {[scale, rate](double t) { return scale * std::exp(rate * t); },
          [scale, rate](double t, Side) {
            return std::optional<double>(scale * rate * std::exp(rate * t));
          },
          label.str()};
}

std::vector<DifferentiableFunction> trig_onb_primitives(std::size_t n) {
  std::vector<DifferentiableFunction> out;
  out.reserve(n);
  if (n > 0) {
    DifferentiableFunction f = linear_function(1.0);
    f.label = "int e_1";
    out.push_back(std::move(f));
  }
  for (std::size_t i = 2; i <= n; ++i) {
    const double k = static_cast<double>(i / 2);
    const double w = 2.0 * std::numbers::pi * k;
    const double amp = std::numbers::sqrt2 / w;
    DifferentiableFunction f;
    if (i % 2 == 0) {
      f.value = [w, amp](double t) { return amp * std::sin(w * t); };
      f.derivative = [w](double t, Side) {
        return std::optional<double>(std::numbers::sqrt2 * std::cos(w * t));
      };
    } else {
      f.value = [w, amp](double t) { return amp * (1.0 - std::cos(w * t)); };
      f.derivative = [w](double t, Side) {
        return std::optional<double>(std::numbers::sqrt2 * std::sin(w * t));
      };
    }
    f.label = "int e_" + std::to_string(i);
    out.push_back(std::move(f));
  }
  return out;
}

ModelSpec ModelSpec::fbm(double H, double horizon) {
  ModelSpec spec{FractionalBrownian{H}, horizon, std::nullopt};
  spec.validate();
  return spec;
}

std::size_t ModelSpec::atom_count() const noexcept {
  if (const auto* basis = std::get_if<BasisExpansion>(&variant)) return basis->functions.size();
  if (std::holds_alternative<TwoAtom>(variant)) return 2;
  return 0;
}

namespace {

void check_hurst(double H) {
  if (!(H > 0.0 && H < 1.0)) {
    std::ostringstream msg;
    msg << "Hurst index H = " << H << " outside (0,1)";
    throw DomainError(msg.str());
  }
}

bool callable(const DifferentiableFunction& f) { return static_cast<bool>(f.value); }

}  // namespace

void ModelSpec::validate() const {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("horizon T must be > 0");
  if (mean && !callable(*mean)) throw DomainError("mean function has no value");
  if (const auto* fbm = std::get_if<FractionalBrownian>(&variant)) {
    check_hurst(fbm->H);
  } else if (const auto* basis = std::get_if<BasisExpansion>(&variant)) {
    if (basis->functions.empty()) throw DomainError("basis expansion needs at least one function");
    if (!(basis->bound > 0.0) || !std::isfinite(basis->bound)) {
      throw DomainError("basis expansion bound A must be finite and > 0");
    }
    for (const auto& f : basis->functions) {
      if (!callable(f)) throw DomainError("basis function has no value");
    }
    constexpr int kProbes = 200;
    for (int k = 0; k <= kProbes; ++k) {
      const double t = horizon * k / kProbes;
      double sum = 0.0;
      for (const auto& f : basis->functions) sum += f(t) * f(t);
      if (sum > basis->bound * (1.0 + 1e-9)) {
        std::ostringstream msg;
        msg << "basis expansion: sum f_i(t)^2 = " << sum << " exceeds bound " << basis->bound
            << " at t = " << t;
        throw DomainError(msg.str());
      }
    }
  } else {
    const auto& atoms = std::get<TwoAtom>(variant);
    if (!callable(atoms.f1) || !callable(atoms.f2)) throw DomainError("two-atom function missing");
    if (!(atoms.var1 > 0.0) || !(atoms.var2 > 0.0)) {
      throw DomainError("two-atom variances must be > 0");
    }
  }
}

double fbm_cov(double H, double s, double t) {
  check_hurst(H);
  if (s < 0.0 || t < 0.0) throw DomainError("fbm_cov: times must be >= 0");
  if (H == 0.5) return std::min(s, t);
  const double p = 2.0 * H;
  return 0.5 * (std::pow(t, p) + std::pow(s, p) - std::pow(std::abs(t - s), p));
}

double pow_diff(double y, double d, double p) {
  if (y == 0.0) return std::pow(d, p);
  if (y + d == 0.0) return -std::pow(y, p);
  return std::pow(y, p) * std::expm1(p * std::log1p(d / y));
}

double fbm_cov_increment(double H, double s, double t, double h) {
  check_hurst(H);
  const double p = 2.0 * H;
  const double first = pow_diff(t, h, p);
  const double a = t - s;
  double second;
  if (a >= 0.0 && a + h >= 0.0) {
    second = pow_diff(a, h, p);
  } else if (a <= 0.0 && a + h <= 0.0) {
    second = pow_diff(-a, -h, p);
  } else {
    second = std::pow(std::abs(a + h), p) - std::pow(std::abs(a), p);
  }
  return 0.5 * (first - second);
}

double model_cov(const ModelSpec& model, double s, double t) {
  if (const auto* fbm = std::get_if<FractionalBrownian>(&model.variant)) {
    return fbm_cov(fbm->H, s, t);
  }
  if (const auto* basis = std::get_if<BasisExpansion>(&model.variant)) {
    double sum = 0.0;
    for (const auto& f : basis->functions) sum += f(s) * f(t);
    return sum;
  }
  const auto& atoms = std::get<TwoAtom>(model.variant);
  return atoms.f1(s) * atoms.f1(t) * atoms.var1 + atoms.f2(s) * atoms.f2(t) * atoms.var2;
}

namespace {

std::optional<double> fbm_partial(double H, double t, double s, Side side) {
  if (!(t > 0.0)) throw DomainError("cov_partial_u: t must be > 0 for fBm");
  const double p = 2.0 * H;
  const double base = H * std::pow(t, p - 1.0);
  if (t != s) {
    const double d = t - s;
    const double sign = d > 0.0 ? 1.0 : -1.0;
    return base - H * sign * std::pow(std::abs(d), p - 1.0);
  }
  if (H > 0.5) return base;
  if (H == 0.5) {
    // min(u, s): slope 1 from the left, 0 from the right.
    if (side == Side::left) return 1.0;
    if (side == Side::right) return 0.0;
    return std::nullopt;
  }
  return std::nullopt;
}

// Adds f'(t) f(s) w; returns false when needed and undefined.
bool accumulate_atom(const DifferentiableFunction& f, double t, double s, double weight,
                     Side side, double& sum) {
  const double fs = f(s);
  if (fs == 0.0) return true;
  const auto df = f.derivative_at(t, side);
  if (!df) return false;
  sum += *df * fs * weight;
  return true;
}

}  // namespace

std::optional<double> cov_partial_u(const ModelSpec& model, double t, double s, Side side) {
  const double slack = 1e-12 * model.horizon;
  if (t < 0.0 || t > model.horizon + slack || s < 0.0 || s > model.horizon + slack) {
    std::ostringstream msg;
    msg << "cov_partial_u: (t,s) = (" << t << ", " << s << ") outside [0, " << model.horizon
        << "]";
    throw DomainError(msg.str());
  }
  if (const auto* fbm = std::get_if<FractionalBrownian>(&model.variant)) {
    return fbm_partial(fbm->H, t, s, side);
  }
  double sum = 0.0;
  if (const auto* basis = std::get_if<BasisExpansion>(&model.variant)) {
    for (const auto& f : basis->functions) {
      if (!accumulate_atom(f, t, s, 1.0, side, sum)) return std::nullopt;
    }
    return sum;
  }
  const auto& atoms = std::get<TwoAtom>(model.variant);
  if (!accumulate_atom(atoms.f1, t, s, atoms.var1, side, sum)) return std::nullopt;
  if (!accumulate_atom(atoms.f2, t, s, atoms.var2, side, sum)) return std::nullopt;
  return sum;
}

double kernel_normalization(double H) {
  check_hurst(H);
  if (H == 0.5) return 1.0;
  // cos(pi H) / (1 - 2H) = sin(pi x) / (2x) with x = 1/2 - H
  const double x = 0.5 - H;
  const double ratio = std::sin(std::numbers::pi * x) / (2.0 * x);
  const double v = std::tgamma(2.0 - 2.0 * H) * ratio / (std::numbers::pi * H);
  return 1.0 / std::sqrt(v);
}

double kernel_KH(double H, double t, double s) {
  check_hurst(H);
  if (!(s > 0.0)) throw DomainError("kernel_KH: s must be > 0 (singular at the origin)");
  if (s >= t) return 0.0;
  if (H == 0.5) return 1.0;
  const double prefactor = std::exp((H - 0.5) * std::log(t - s) - std::lgamma(H + 0.5));
  const double f = hyp2f1(H - 0.5, 0.5 - H, H + 0.5, 1.0 - t / s);
  const double value = kernel_normalization(H) * prefactor * f;
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "kernel_KH not finite at (t,s) = (" << t << ", " << s << ")";
    throw EvaluationError(msg.str(), s, t);
  }
  return value;
}

double fgn_autocovariance(double H, long long k, double dt) {
  check_hurst(H);
  if (!(dt > 0.0)) throw DomainError("fgn_autocovariance: dt must be > 0");
  const double p = 2.0 * H;
  const double kk = std::abs(static_cast<double>(k));
  return 0.5 * std::pow(dt, p) *
         (std::pow(kk + 1.0, p) - 2.0 * std::pow(kk, p) + std::pow(std::abs(kk - 1.0), p));
}

CovarianceOracle as_oracle(const ModelSpec& model) {
  model.validate();
  CovarianceOracle oracle;
  oracle.cov = [model](double s, double t) { return model_cov(model, s, t); };
  oracle.partial_u = [model](double t, double s, Side side) {
    return cov_partial_u(model, t, s, side);
  };
  if (model.mean) oracle.mean = model.mean->value;
  if (const auto* fbm = std::get_if<FractionalBrownian>(&model.variant)) {
    const double H = fbm->H;
    oracle.increment = [H](double s, double t, double h) { return fbm_cov_increment(H, s, t, h); };
  }
  return oracle;
}

}  // namespace gderiv
