#include "gderiv/derivative_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gderiv/errors.hpp"

namespace gderiv {

QuotientSchedule QuotientSchedule::defaults(double t, QuotientMode mode) {
  return {t / 16.0, 0.5, 20, mode};
}

std::vector<double> QuotientSchedule::signed_steps(QuotientMode side) const {
  std::vector<double> out(static_cast<std::size_t>(std::max(steps, 0)));
  const double sign = side == QuotientMode::backward ? -1.0 : 1.0;
  double h = h0;
  for (auto& v : out) {
    v = sign * h;
    h *= ratio;
  }
  return out;
}

void QuotientSchedule::validate(double t, double horizon) const {
  if (!(h0 > 0.0)) throw DomainError("schedule: h0 must be > 0");
  if (!(ratio > 0.0 && ratio < 1.0)) throw DomainError("schedule: ratio must lie in (0,1)");
  if (steps < 8) throw DomainError("schedule: at least 8 steps are required");
  const double slack = 1e-12 * horizon;
  if (mode != QuotientMode::backward && t + h0 > horizon + slack) {
    std::ostringstream msg;
    msg << "schedule: t + h0 = " << t + h0 << " exceeds the horizon " << horizon;
    throw DomainError(msg.str());
  }
  if (mode != QuotientMode::forward && t - h0 < -slack) {
    std::ostringstream msg;
    msg << "schedule: t - h0 = " << t - h0 << " is negative";
    throw DomainError(msg.str());
  }
}

namespace {

std::string describe(const FirstChaosVariable& v) {
  std::ostringstream out;
  bool first = true;
  for (const auto& term : v.terms()) {
    if (!first) out << (term.weight < 0.0 ? "-" : "+");
    const double w = first ? term.weight : std::abs(term.weight);
    if (w != 1.0) out << w << "*";
    out << "Z(" << term.time << ")";
    first = false;
  }
  if (v.offset() != 0.0 || first) out << (first ? "" : "+") << v.offset();
  return out.str();
}

double model_mean_of(const FirstChaosVariable& v, const ModelSpec& model) {
  double m = v.offset();
  if (model.mean) {
    for (const auto& term : v.terms()) m += term.weight * (*model.mean)(term.time);
  }
  return m;
}

Eigen::VectorXd to_vector(const AffineCombination& c) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(c.coefficients.size() + 1));
  for (std::size_t i = 0; i < c.coefficients.size(); ++i) v(static_cast<Eigen::Index>(i)) = c.coefficients[i];
  v(v.size() - 1) = c.constant;
  return v;
}

AffineCombination from_vector(const Eigen::VectorXd& v) {
  AffineCombination c;
  c.coefficients.assign(v.data(), v.data() + v.size() - 1);
  c.constant = v(v.size() - 1);
  return c;
}

AffineCombination scaled(AffineCombination c, double factor) {
  for (auto& x : c.coefficients) x *= factor;
  c.constant *= factor;
  return c;
}

Side side_of(QuotientMode mode) { return mode == QuotientMode::backward ? Side::left : Side::right; }

}  // namespace

QuotientEngine::QuotientEngine(const ModelSpec& model, double t, const ConditioningSpec& spec)
    : model_(model), t_(t), oracle_(as_oracle(model)), spec_(spec) {
  if (!(t > 0.0) || t > model.horizon * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "t = " << t << " outside (0, " << model.horizon << "]";
    throw DomainError(msg.str());
  }
  if (const auto* span = std::get_if<LinearSpan>(&spec)) {
    std::vector<FirstChaosVariable> vars;
    for (const auto& v : span->vars) {
      FirstChaosVariable shifted(v.terms(), model_mean_of(v, model));
      labels_.push_back(describe(v));
      vars.push_back(std::move(shifted));
    }
    span_ = std::make_shared<const GramSystem>(std::move(vars), oracle_);
    gram_ = span_->gram();
    means_ = span_->offsets();
  } else if (std::holds_alternative<EvenFunctionOf>(spec)) {
    gram_.resize(0, 0);
    means_.resize(0);
  } else if (std::holds_alternative<MeasurableFunctionOf>(spec)) {
    throw ContractError(
        "conditioning on a general function of a variable has no closed form; use the Monte "
        "Carlo estimators");
  } else {
    const auto& full = std::get<FullGenerators>(spec);
    const std::size_t n = model.atom_count();
    if (n == 0) throw ContractError("FullGenerators needs a basis-expansion or two-atom model");
    atoms_ = full.atoms;
    if (atoms_.empty()) {
      atoms_.resize(n);
      std::iota(atoms_.begin(), atoms_.end(), std::size_t{0});
    }
    for (auto i : atoms_) {
      if (i >= n) {
        std::ostringstream msg;
        msg << "atom index " << i << " out of range (model has " << n << " atoms)";
        throw DomainError(msg.str());
      }
      double var = 1.0;
      if (const auto* two = std::get_if<TwoAtom>(&model.variant)) var = i == 0 ? two->var1 : two->var2;
      atom_variance_.push_back(var);
      labels_.push_back("N" + std::to_string(i + 1));
    }
    const Eigen::Map<const Eigen::VectorXd> d(atom_variance_.data(),
                                              static_cast<Eigen::Index>(atom_variance_.size()));
    gram_ = d.asDiagonal();
    means_ = Eigen::VectorXd::Zero(d.size());
  }
}

double QuotientEngine::mean_increment(double h) const {
  if (!model_.mean) return 0.0;
  return ((*model_.mean)(t_ + h) - (*model_.mean)(t_)) / h;
}

namespace {

const DifferentiableFunction& atom_function(const ModelSpec& model, std::size_t i) {
  if (const auto* basis = std::get_if<BasisExpansion>(&model.variant)) return basis->functions[i];
  const auto& two = std::get<TwoAtom>(model.variant);
  return i == 0 ? two.f1 : two.f2;
}

}  // namespace

AffineCombination QuotientEngine::at(double h) const {
  const double end = t_ + h;
  if (h == 0.0 || end < 0.0 || end > model_.horizon * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "difference quotient: t + h = " << end << " outside [0, " << model_.horizon << "]";
    throw DomainError(msg.str());
  }
  const double dm = mean_increment(h);
  if (span_) {
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(span_->size()));
    for (std::size_t i = 0; i < span_->size(); ++i) {
      double sum = 0.0;
      for (const auto& term : span_->variables()[i].terms()) {
        sum += term.weight * oracle_.cov_increment(term.time, t_, h);
      }
      rhs(static_cast<Eigen::Index>(i)) = sum / h;
    }
    return regress_from(rhs, dm, *span_);
  }
  AffineCombination out;
  out.constant = dm;
  for (auto i : atoms_) {
    const auto& f = atom_function(model_, i);
    out.coefficients.push_back((f(end) - f(t_)) / h);
  }
  return out;
}

std::optional<AffineCombination> QuotientEngine::limit(Side side) const {
  double dm = 0.0;
  if (model_.mean) {
    const auto d = model_.mean->derivative_at(t_, side);
    if (!d) return std::nullopt;
    dm = *d;
  }
  if (span_) {
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(span_->size()));
    for (std::size_t i = 0; i < span_->size(); ++i) {
      double sum = 0.0;
      for (const auto& term : span_->variables()[i].terms()) {
        const auto d = cov_partial_u(model_, t_, term.time, side);
        if (!d) return std::nullopt;
        sum += term.weight * *d;
      }
      rhs(static_cast<Eigen::Index>(i)) = sum;
    }
    return regress_from(rhs, dm, *span_);
  }
  AffineCombination out;
  out.constant = dm;
  for (auto i : atoms_) {
    const auto d = atom_function(model_, i).derivative_at(t_, side);
    if (!d) return std::nullopt;
    out.coefficients.push_back(*d);
  }
  return out;
}

double QuotientEngine::variance(const AffineCombination& c) const {
  if (c.coefficients.empty()) return 0.0;
  const Eigen::Map<const Eigen::VectorXd> v(c.coefficients.data(),
                                            static_cast<Eigen::Index>(c.coefficients.size()));
  return std::max(0.0, v.dot(gram_ * v));
}

double QuotientEngine::mean(const AffineCombination& c) const {
  if (c.coefficients.empty()) return c.constant;
  const Eigen::Map<const Eigen::VectorXd> v(c.coefficients.data(),
                                            static_cast<Eigen::Index>(c.coefficients.size()));
  return c.constant + v.dot(means_);
}

double QuotientEngine::l2_norm(const AffineCombination& c) const {
  const double m = mean(c);
  return std::sqrt(variance(c) + m * m);
}

AffineCombination difference_quotient(const ModelSpec& model, double t, double h,
                                      const ConditioningSpec& spec) {
  return QuotientEngine(model, t, spec).at(h);
}

std::optional<AffineCombination> stochastic_derivative_exact(const ModelSpec& model, double t,
                                                             const FirstChaosVariable& y) {
  const auto oracle = as_oracle(model);
  const double var = inner_product(y, y, oracle);
  if (!(var > 0.0)) throw DegenerateVariable("stochastic derivative: Var(Y) = 0");
  double d = 0.0;
  for (const auto& term : y.terms()) {
    const auto p = cov_partial_u(model, t, term.time, Side::two_sided);
    if (!p) return std::nullopt;
    d += term.weight * *p;
  }
  double dm = 0.0;
  if (model.mean) {
    const auto m = model.mean->derivative_at(t, Side::two_sided);
    if (!m) return std::nullopt;
    dm = *m;
  }
  const double coefficient = d / var;
  return AffineCombination{{coefficient}, dm - coefficient * model_mean_of(y, model)};
}

const char* to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::differentiates: return "differentiates";
    case VerdictKind::degenerates: return "degenerates";
    case VerdictKind::diverges: return "diverges";
    case VerdictKind::inconclusive: return "inconclusive";
  }
  return "unknown";
}

LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("least squares needs >= 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("least squares needs two distinct abscissae");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double ss_res = std::max(0.0, syy - fit.slope * sxy);
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

Extrapolation extrapolate(std::vector<Eigen::VectorXd> sequence,
                          const std::function<double(const Eigen::VectorXd&)>& norm,
                          int max_levels) {
  Extrapolation out;
  out.sequence = std::move(sequence);
  auto inner = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double p = norm(a + b);
    const double m = norm(a - b);
    return 0.25 * (p * p - m * m);
  };
  // Entries near the end that must carry a usable local ratio.
  constexpr std::size_t kTail = 7;
  for (int level = 0; level < max_levels; ++level) {
    const auto& s = out.sequence;
    const std::size_t n = s.size();
    if (n < kTail + 2) break;
    const double scale = std::max(norm(s.back()), 1e-300);
    if (norm(s[n - 1] - s[n - 2]) <= 1e-13 * scale) break;

    // Aitken step with a local ratio per position.
    std::vector<Eigen::VectorXd> next;
    std::vector<double> ratios;
    bool usable = true;
    for (std::size_t k = 0; k + 2 < n; ++k) {
      const Eigen::VectorXd d0 = s[k + 1] - s[k];
      const Eigen::VectorXd d1 = s[k + 2] - s[k + 1];
      const double dd = inner(d0, d0);
      const double rho = dd > 0.0 ? inner(d1, d0) / dd : 0.0;
      const bool in_tail = k + 2 + kTail >= n;
      if (!(rho > 0.0 && rho < 0.95)) {
        if (in_tail) usable = false;
        next.push_back(s[k + 2]);
      } else {
        next.push_back((s[k + 2] - rho * s[k + 1]) / (1.0 - rho));
      }
      ratios.push_back(rho);
    }
    if (!usable) break;
    out.ratios.push_back(ratios.back());
    out.sequence = std::move(next);
    ++out.levels;
  }
  return out;
}

namespace {

struct TailFit {
  bool ok = false;
  LinearFit fit;
};

TailFit fit_tail(const std::vector<EvidenceRow>& rows, std::size_t count) {
  std::vector<double> x, y;
  const std::size_t start = rows.size() > count ? rows.size() - count : 0;
  for (std::size_t k = start; k < rows.size(); ++k) {
    if (rows[k].l2_norm > 0.0) {
      x.push_back(std::log(std::abs(rows[k].h)));
      y.push_back(std::log(rows[k].l2_norm));
    }
  }
  if (x.size() < 2) return {};
  return {true, least_squares(x, y)};
}

// Number of trailing steps over which the norm strictly grows as h shrinks.
std::size_t growth_run(const std::vector<EvidenceRow>& rows) {
  std::size_t run = rows.empty() ? 0 : 1;
  for (std::size_t k = rows.size(); k-- > 1;) {
    if (rows[k].l2_norm > rows[k - 1].l2_norm) {
      ++run;
    } else {
      break;
    }
  }
  return run;
}

struct SequenceLimit {
  bool converged = false;
  AffineCombination value;
  double spread = 0.0;
  int levels = 0;
};

SequenceLimit sequence_limit(const QuotientEngine& engine, const std::vector<EvidenceRow>& rows,
                             const Tolerances& tol) {
  auto norm = [&](const Eigen::VectorXd& v) { return engine.l2_norm(from_vector(v)); };
  std::vector<Eigen::VectorXd> seq;
  for (const auto& row : rows) seq.push_back(to_vector(row.quotient));
  Extrapolation ex{seq, 0, {}};
  if (tol.extrapolate) ex = extrapolate(std::move(seq), norm, tol.max_extrapolation_levels);

  SequenceLimit out;
  out.levels = ex.levels;
  const auto& s = ex.sequence;
  const auto window = static_cast<std::size_t>(std::max(tol.cauchy_window, 2));
  if (s.size() < window) return out;
  const Eigen::VectorXd& last = s.back();
  for (std::size_t k = s.size() - window; k + 1 < s.size(); ++k) {
    out.spread = std::max(out.spread, norm(s[k] - last));
  }
  out.value = from_vector(last);
  out.converged = out.spread <= std::max(tol.cauchy_rel * norm(last), tol.cauchy_abs);
  return out;
}

std::vector<EvidenceRow> quotient_path(const QuotientEngine& engine, const std::vector<double>& hs,
                                       double alpha) {
  std::vector<EvidenceRow> rows;
  rows.reserve(hs.size());
  for (double h : hs) {
    auto q = engine.at(h);
    if (alpha != 1.0) q = scaled(std::move(q), std::pow(std::abs(h), 1.0 - alpha));
    const double n = engine.l2_norm(q);
    rows.push_back({h, std::move(q), n});
  }
  return rows;
}

void set_limit(Verdict& v, const QuotientEngine& engine, AffineCombination limit,
               const Tolerances& tol) {
  v.derivative_variance = engine.variance(limit);
  v.derivative_norm = engine.l2_norm(limit);
  v.derivative = std::move(limit);
  v.kind = v.derivative_variance < tol.variance ? VerdictKind::degenerates
                                                : VerdictKind::differentiates;
}

Verdict analyze_side(const QuotientEngine& engine, const QuotientSchedule& schedule,
                     QuotientMode side, const Tolerances& tol, double alpha,
                     bool use_closed_form) {
  Verdict v;
  v.labels = engine.labels();
  v.evidence = quotient_path(engine, schedule.signed_steps(side), alpha);

  const auto tail = static_cast<std::size_t>(std::max(tol.monotone_min, 2));
  const auto fit = fit_tail(v.evidence, tail);
  if (fit.ok) {
    v.slope = fit.fit.slope;
    v.intercept = fit.fit.intercept;
    v.r_squared = fit.fit.r_squared;
  }
  const std::size_t run = growth_run(v.evidence);
  const std::optional<AffineCombination> closed =
      use_closed_form ? engine.limit(side_of(side)) : std::nullopt;

  if (!closed && fit.ok && run >= tail && v.slope < -tol.slope_min &&
      v.r_squared > tol.r_squared_min) {
    v.kind = VerdictKind::diverges;
    std::ostringstream msg;
    msg << "norm grows over the last " << run << " steps, log-log slope " << v.slope
        << ", R^2 " << v.r_squared;
    v.diagnostics = msg.str();
    if (tol.renormalize_alpha) {
      const auto renorm = quotient_path(engine, schedule.signed_steps(side), *tol.renormalize_alpha);
      const auto lim = sequence_limit(engine, renorm, tol);
      if (lim.converged) {
        v.renormalized = lim.value;
        v.renormalization_alpha = tol.renormalize_alpha;
      }
    }
    return v;
  }

  const auto lim = sequence_limit(engine, v.evidence, tol);
  std::ostringstream msg;
  msg << "Cauchy spread " << lim.spread << " after " << lim.levels << " extrapolation level(s)";
  if (closed) {
    const double gap = lim.converged ? engine.l2_norm(from_vector(to_vector(*closed) -
                                                                  to_vector(lim.value)))
                                     : 0.0;
    msg << "; closed-form one-sided limit used";
    if (lim.converged) msg << " (gap to extrapolated " << gap << ")";
    set_limit(v, engine, *closed, tol);
  } else if (lim.converged) {
    set_limit(v, engine, lim.value, tol);
  } else {
    v.kind = VerdictKind::inconclusive;
    msg << "; neither convergent nor cleanly divergent (growth run " << run << ", slope "
        << v.slope << ", R^2 " << v.r_squared << ")";
  }
  v.diagnostics = msg.str();
  return v;
}

Verdict combine_sides(Verdict forward, Verdict backward, const QuotientEngine& engine,
                      const Tolerances& tol) {
  Verdict v;
  v.labels = engine.labels();
  if (forward.kind == VerdictKind::diverges || backward.kind == VerdictKind::diverges) {
    const Verdict& d = forward.kind == VerdictKind::diverges ? forward : backward;
    v.kind = VerdictKind::diverges;
    v.slope = d.slope;
    v.intercept = d.intercept;
    v.r_squared = d.r_squared;
    v.renormalized = d.renormalized;
    v.renormalization_alpha = d.renormalization_alpha;
    v.diagnostics = std::string(&d == &forward ? "forward" : "backward") + " side diverges: " +
                    d.diagnostics;
  } else if (forward.differentiates() && backward.differentiates()) {
    const Eigen::VectorXd f = to_vector(forward.derivative);
    const Eigen::VectorXd b = to_vector(backward.derivative);
    const double gap = engine.l2_norm(from_vector(f - b));
    const double scale = std::max(engine.l2_norm(forward.derivative), 1.0);
    if (gap <= tol.two_sided_agreement * scale) {
      set_limit(v, engine, from_vector(0.5 * (f + b)), tol);
      v.diagnostics = "one-sided limits agree";
    } else {
      v.kind = VerdictKind::inconclusive;
      std::ostringstream msg;
      msg << "one-sided limits differ by " << gap << " in L2";
      v.diagnostics = msg.str();
    }
  } else {
    v.kind = VerdictKind::inconclusive;
    v.diagnostics = std::string("forward ") + to_string(forward.kind) + ", backward " +
                    to_string(backward.kind);
  }
  v.evidence = forward.evidence;
  v.one_sided.push_back(std::move(forward));
  v.one_sided.push_back(std::move(backward));
  return v;
}

}  // namespace

Verdict classify(const ModelSpec& model, double t, const ConditioningSpec& spec,
                 const QuotientSchedule& schedule, const Tolerances& tol) {
  schedule.validate(t, model.horizon);
  const QuotientEngine engine(model, t, spec);
  if (schedule.mode != QuotientMode::two_sided) {
    return analyze_side(engine, schedule, schedule.mode, tol, 1.0, true);
  }
  return combine_sides(analyze_side(engine, schedule, QuotientMode::forward, tol, 1.0, true),
                       analyze_side(engine, schedule, QuotientMode::backward, tol, 1.0, true),
                       engine, tol);
}

std::optional<AffineCombination> renormalized_limit(const ModelSpec& model, double t,
                                                    const ConditioningSpec& spec, double alpha,
                                                    const QuotientSchedule& schedule,
                                                    const Tolerances& tol) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("renormalization exponent must be in (0,1]");
  if (schedule.mode == QuotientMode::two_sided) {
    throw ContractError("renormalized limits are one-sided; use forward or backward mode");
  }
  schedule.validate(t, model.horizon);
  const QuotientEngine engine(model, t, spec);
  const auto rows = quotient_path(engine, schedule.signed_steps(schedule.mode), alpha);
  const auto lim = sequence_limit(engine, rows, tol);
  if (!lim.converged) return std::nullopt;
  if (alpha == 1.0) {
    if (auto closed = engine.limit(side_of(schedule.mode))) return closed;
  }
  return lim.value;
}

RateFit rate_exponent(const ModelSpec& model, double t, const ConditioningSpec& spec,
                      const QuotientSchedule& schedule) {
  schedule.validate(t, model.horizon);
  const QuotientEngine engine(model, t, spec);
  const QuotientMode side =
      schedule.mode == QuotientMode::backward ? QuotientMode::backward : QuotientMode::forward;
  const auto rows = quotient_path(engine, schedule.signed_steps(side), 1.0);
  RateFit out;
  std::vector<double> x, y;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].l2_norm > 0.0) {
      x.push_back(std::log(std::abs(rows[k].h)));
      y.push_back(std::log(rows[k].l2_norm));
    } else {
      out.excluded.push_back(k);
    }
  }
  if (x.size() < 2) {
    out.degenerate = true;
    out.fit.slope = std::nan("");
    out.fit.intercept = std::nan("");
    out.fit.r_squared = std::nan("");
    return out;
  }
  out.fit = least_squares(x, y);
  return out;
}

double projection_identity_residual(const ModelSpec& model, double t, const LinearSpan& big,
                                    const LinearSpan& sub, const QuotientSchedule& schedule,
                                    const Tolerances& tol) {
  const auto require = [&](const LinearSpan& span, const char* name) {
    auto v = classify(model, t, span, schedule, tol);
    if (!v.differentiates()) {
      throw PreconditionFailed(std::string(name) + " span does not differentiate Z at t (verdict " +
                               to_string(v.kind) + ": " + v.diagnostics + ")");
    }
    return v;
  };
  const Verdict vb = require(big, "big");
  const Verdict vs = require(sub, "sub");

  const auto oracle = as_oracle(model);
  auto shifted = [&](const LinearSpan& span) {
    std::vector<FirstChaosVariable> vars;
    for (const auto& v : span.vars) vars.emplace_back(v.terms(), model_mean_of(v, model));
    return GramSystem(std::move(vars), oracle);
  };
  const GramSystem big_gram = shifted(big);
  const GramSystem sub_gram = shifted(sub);
  const auto projected = project_affine(vb.derivative, big_gram, sub_gram);
  AffineCombination diff = vs.derivative;
  for (std::size_t i = 0; i < diff.coefficients.size(); ++i) {
    diff.coefficients[i] -= projected.coefficients[i];
  }
  diff.constant -= projected.constant;
  return sub_gram.l2_norm(diff);
}

double parseval_divergence(const ModelSpec& model, double t, double h, std::size_t n) {
  const auto* basis = std::get_if<BasisExpansion>(&model.variant);
  if (!basis) throw ContractError("parseval_divergence needs a basis-expansion model");
  if (n > basis->functions.size()) {
    throw DomainError("parseval_divergence: N exceeds the number of basis functions");
  }
  if (h == 0.0) throw DomainError("parseval_divergence: h must be nonzero");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = basis->functions[i];
    const double q = (f(t + h) - f(t)) / h;
    sum += q * q;
  }
  return sum;
}

}  // namespace gderiv
