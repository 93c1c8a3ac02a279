#include "gderiv/gaussian_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace gderiv {

FirstChaosVariable::FirstChaosVariable(std::vector<ChaosTerm> terms, double offset)
    : offset_(offset) {
  if (!std::isfinite(offset)) throw DomainError("first-chaos offset must be finite");
  std::sort(terms.begin(), terms.end(),
            [](const ChaosTerm& a, const ChaosTerm& b) { return a.time < b.time; });
  for (const auto& term : terms) {
    if (!std::isfinite(term.time) || !std::isfinite(term.weight)) {
      throw DomainError("first-chaos terms must be finite");
    }
    if (!terms_.empty() && terms_.back().time == term.time) {
      terms_.back().weight += term.weight;
    } else {
      terms_.push_back(term);
    }
  }
  std::erase_if(terms_, [](const ChaosTerm& t) { return t.weight == 0.0; });
}

FirstChaosVariable FirstChaosVariable::point(double time, double offset) {
  return FirstChaosVariable({{time, 1.0}}, offset);
}

FirstChaosVariable FirstChaosVariable::constant(double value) {
  return FirstChaosVariable({}, value);
}

FirstChaosVariable FirstChaosVariable::scaled(double factor) const {
  std::vector<ChaosTerm> terms = terms_;
  for (auto& term : terms) term.weight *= factor;
  return FirstChaosVariable(std::move(terms), offset_ * factor);
}

FirstChaosVariable FirstChaosVariable::operator+(const FirstChaosVariable& other) const {
  std::vector<ChaosTerm> terms = terms_;
  terms.insert(terms.end(), other.terms_.begin(), other.terms_.end());
  return FirstChaosVariable(std::move(terms), offset_ + other.offset_);
}

FirstChaosVariable FirstChaosVariable::operator-(const FirstChaosVariable& other) const {
  return *this + other.scaled(-1.0);
}

double CovarianceOracle::cov_increment(double s, double t, double h) const {
  if (increment) return increment(s, t, h);
  return cov(t + h, s) - cov(t, s);
}

double partial_consistency_error(const CovarianceOracle& oracle,
                                 std::span<const std::pair<double, double>> probes,
                                 double step) {
  if (!oracle.partial_u) return 0.0;
  double worst = 0.0;
  for (const auto& [t, s] : probes) {
    const auto left = oracle.partial_u(t, s, Side::left);
    const auto right = oracle.partial_u(t, s, Side::right);
    if (!left || !right) continue;
    if (std::abs(*left - *right) > 1e-9 * std::max(1.0, std::abs(*left))) continue;
    const double fd = (oracle.cov(t + step, s) - oracle.cov(t - step, s)) / (2.0 * step);
    const double scale = std::max(std::abs(fd), 1e-12);
    worst = std::max(worst, std::abs(fd - *right) / scale);
  }
  return worst;
}

double inner_product(const FirstChaosVariable& x, const FirstChaosVariable& y,
                     const CovarianceOracle& oracle) {
  double sum = 0.0;
  for (const auto& a : x.terms()) {
    for (const auto& b : y.terms()) {
      const double c = oracle.cov(a.time, b.time);
      if (!std::isfinite(c)) {
        std::ostringstream msg;
        msg << "non-finite covariance at (s,t) = (" << a.time << ", " << b.time << ")";
        throw EvaluationError(msg.str(), a.time, b.time);
      }
      sum += a.weight * b.weight * c;
    }
  }
  return sum;
}

GramSystem::GramSystem(std::vector<FirstChaosVariable> variables, CovarianceOracle oracle,
                       double min_rcond)
    : vars_(std::move(variables)), oracle_(std::move(oracle)), min_rcond_(min_rcond) {
  const auto n = static_cast<Eigen::Index>(vars_.size());
  gram_.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double g = inner_product(vars_[i], vars_[j], oracle_);
      gram_(i, j) = g;
      gram_(j, i) = g;
    }
  }
  if (n == 0) {
    rcond_ = 1.0;
    return;
  }
  llt_.compute(gram_);
  if (llt_.info() == Eigen::Success) {
    rcond_ = llt_.rcond();
  } else {
    use_ldlt_ = true;
    ldlt_.compute(gram_);
    rcond_ = 0.0;
    if (ldlt_.info() == Eigen::Success) {
      // Eigen's estimate ignores zero pivots; bound it by the pivot spread.
      const Eigen::VectorXd d = ldlt_.vectorD().cwiseAbs();
      const double spread = d.maxCoeff() > 0.0 ? d.minCoeff() / d.maxCoeff() : 0.0;
      rcond_ = std::min(ldlt_.rcond(), spread);
    }
  }
  if (!std::isfinite(rcond_)) rcond_ = 0.0;
}

Eigen::VectorXd GramSystem::solve(const Eigen::VectorXd& rhs) const {
  if (singular()) {
    const double cond = rcond_ > 0.0 ? 1.0 / rcond_ : std::numeric_limits<double>::infinity();
    std::ostringstream msg;
    msg << "Gram matrix of " << vars_.size() << " variables is singular (condition estimate "
        << cond << ")";
    throw SingularSpan(msg.str(), cond);
  }
  if (vars_.empty()) return Eigen::VectorXd();
  return use_ldlt_ ? Eigen::VectorXd(ldlt_.solve(rhs)) : Eigen::VectorXd(llt_.solve(rhs));
}

Eigen::VectorXd GramSystem::cross_covariances(const FirstChaosVariable& target) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(vars_.size()));
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = inner_product(target, vars_[i], oracle_);
  }
  return out;
}

Eigen::VectorXd GramSystem::offsets() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(vars_.size()));
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = vars_[i].offset();
  }
  return out;
}

namespace {
Eigen::Map<const Eigen::VectorXd> as_vector(const AffineCombination& combo) {
  return {combo.coefficients.data(), static_cast<Eigen::Index>(combo.coefficients.size())};
}
}  // namespace

double GramSystem::variance(const AffineCombination& combo) const {
  if (combo.coefficients.empty()) return 0.0;
  const auto c = as_vector(combo);
  return std::max(0.0, c.dot(gram_ * c));
}

double GramSystem::mean(const AffineCombination& combo) const {
  if (combo.coefficients.empty()) return combo.constant;
  return combo.constant + as_vector(combo).dot(offsets());
}

double GramSystem::l2_norm(const AffineCombination& combo) const {
  const double m = mean(combo);
  return std::sqrt(variance(combo) + m * m);
}

FirstChaosVariable GramSystem::as_variable(const AffineCombination& combo) const {
  FirstChaosVariable out = FirstChaosVariable::constant(combo.constant);
  for (std::size_t i = 0; i < combo.coefficients.size(); ++i) {
    out = out + vars_[i].scaled(combo.coefficients[i]);
  }
  return out;
}

AffineCombination regress_from(const Eigen::VectorXd& cross, double target_offset,
                               const GramSystem& span) {
  AffineCombination out;
  out.constant = target_offset;
  if (span.size() == 0) return out;
  const Eigen::VectorXd c = span.solve(cross);
  out.coefficients.assign(c.data(), c.data() + c.size());
  out.constant -= c.dot(span.offsets());
  return out;
}

AffineCombination regress(const FirstChaosVariable& target, const GramSystem& span) {
  return regress_from(span.cross_covariances(target), target.offset(), span);
}

GramSchmidtResult gram_schmidt(const std::vector<FirstChaosVariable>& family,
                               const CovarianceOracle& oracle, double relative_tol) {
  const auto n = static_cast<Eigen::Index>(family.size());
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      gram(i, j) = gram(j, i) = inner_product(family[i], family[j], oracle);
    }
  }

  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::VectorXd v = Eigen::VectorXd::Unit(n, k);
    // Two classical passes keep orthogonality near machine precision.
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::VectorXd e = basis.row(j).transpose();
        v -= e.dot(gram * v) * e;
      }
    }
    const double norm2 = v.dot(gram * v);
    const double scale = std::sqrt(std::max(gram(k, k), 0.0));
    if (!(norm2 > 0.0) || std::sqrt(norm2) <= relative_tol * scale || scale == 0.0) {
      std::ostringstream msg;
      msg << "Gram-Schmidt pivot " << (k + 1) << " has (near) zero residual norm";
      throw DegenerateFamily(msg.str(), static_cast<std::size_t>(k + 1));
    }
    basis.row(k) = v.transpose() / std::sqrt(norm2);
  }

  GramSchmidtResult result;
  result.change_of_basis = basis;
  for (Eigen::Index k = 0; k < n; ++k) {
    FirstChaosVariable e;
    for (Eigen::Index j = 0; j <= k; ++j) e = e + family[j].scaled(basis(k, j));
    result.orthonormal.push_back(std::move(e));
  }
  return result;
}

AffineCombination project_affine(const AffineCombination& expr, const GramSystem& source,
                                 const GramSystem& sub) {
  // <expr, Z_j> = sum_i c_i <Y_i, Z_j>; computed from source variables directly.
  Eigen::VectorXd cross = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sub.size()));
  for (std::size_t i = 0; i < expr.coefficients.size(); ++i) {
    cross += expr.coefficients[i] * sub.cross_covariances(source.variables()[i]);
  }
  return regress_from(cross, source.mean(expr), sub);
}

}  // namespace gderiv
