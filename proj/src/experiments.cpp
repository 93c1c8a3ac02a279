#include "gderiv/experiments.hpp"

#include <Eigen/Core>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/version.hpp>
#include <fftw3.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "gderiv/acceptance.hpp"
#include "gderiv/chaos_embedding.hpp"
#include "gderiv/covariance_models.hpp"
#include "gderiv/csv.hpp"
#include "gderiv/derivative_engine.hpp"
#include "gderiv/errors.hpp"
#include "gderiv/fractional.hpp"
#include "gderiv/simulation.hpp"

namespace gderiv {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr std::uint64_t kDefaultSeed = 20240601;

struct KindInfo {
  ExperimentKind kind;
  const char* name;
  std::vector<std::string> operations;
};

const std::vector<KindInfo>& kind_table() {
  static const std::vector<KindInfo> table = {
      {ExperimentKind::cov, "cov", {"fbm_cov", "kernel_KH"}},
      {ExperimentKind::classify, "classify", {"classify", "difference_quotient"}},
      {ExperimentKind::derivative, "derivative",
       {"FbmSampler::sample", "DriftSpec", "make_shifted", "mc_stochastic_derivative", "difference_quotient"}},
      {ExperimentKind::renormalize, "renormalize", {"QuotientEngine::at", "rate_exponent", "renormalized_limit"}},
      {ExperimentKind::simulate, "simulate", {"FbmSampler::sample", "make_shifted", "write_csv", "write_binary"}},
      {ExperimentKind::girsanov, "girsanov", {"FbmSampler::sample", "DriftSpec", "make_shifted", "girsanov_weights"}},
      {ExperimentKind::embed, "embed", {"solve_linear_embedding", "embedding_residual", "mc_verify_nelson"}},
      {ExperimentKind::counterexample, "counterexample", {"parseval_divergence", "classify"}},
      {ExperimentKind::paper_suite, "paper-suite", {"paper_suite"}},
  };
  return table;
}

const KindInfo& info(ExperimentKind kind) {
  for (const auto& k : kind_table()) {
    if (k.kind == kind) return k;
  }
  throw ContractError("unknown experiment kind");
}

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

struct Range {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_open = false;
  bool hi_open = false;

  static Range open(double lo, double hi) { return {lo, hi, true, true}; }
  static Range closed(double lo, double hi) { return {lo, hi, false, false}; }
  static Range positive() { return {0.0, std::numeric_limits<double>::infinity(), true, false}; }
  static Range at_least(double lo) { return {lo, std::numeric_limits<double>::infinity(), false, false}; }

  bool contains(double v) const {
    if (!std::isfinite(v)) return false;
    if (lo_open ? !(v > lo) : !(v >= lo)) return false;
    if (hi_open ? !(v < hi) : !(v <= hi)) return false;
    return true;
  }
  std::string describe() const {
    std::string out = lo_open ? "(" : "[";
    out += std::isinf(lo) ? "-inf" : num(lo);
    out += ", ";
    out += std::isinf(hi) ? "inf" : num(hi);
    out += hi_open ? ")" : "]";
    return out;
  }
};

// Reads one table of the raw config, records the normalized values and
// rejects keys that were never asked for.
class Fields {
 public:
  Fields(const Json* raw, std::string path) : raw_(raw), path_(std::move(path)) {
    if (raw_ && !raw_->is_null() && !raw_->is_object()) throw ConfigError(where(), "expected a table");
  }

  Json out = Json::object();

  std::string field(const std::string& key) const { return join(path_, key); }

  double number(const std::string& key, double fallback, Range range = {}) {
    const Json* v = take(key);
    double value = fallback;
    if (v) {
      if (!v->is_number()) throw ConfigError(field(key), "expected a number");
      value = v->get<double>();
    }
    if (!range.contains(value)) {
      throw ConfigError(field(key), "must be in " + range.describe() + ", got " + num(value));
    }
    out[key] = value;
    return value;
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback, std::int64_t lo, std::int64_t hi) {
    const Json* v = take(key);
    std::int64_t value = fallback;
    if (v) {
      if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
      if (v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(hi)) {
        throw ConfigError(field(key), "must be at most " + std::to_string(hi));
      }
      value = v->get<std::int64_t>();
    }
    if (value < lo || value > hi) {
      throw ConfigError(field(key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " +
                                        std::to_string(value));
    }
    out[key] = value;
    return value;
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    const Json* v = take(key);
    std::uint64_t value = fallback;
    if (v) {
      if (!v->is_number_integer()) throw ConfigError(field(key), "expected a non-negative integer");
      if (!v->is_number_unsigned() && v->get<std::int64_t>() < 0) {
        throw ConfigError(field(key), "expected a non-negative integer");
      }
      value = v->get<std::uint64_t>();
    }
    out[key] = value;
    return value;
  }

  bool boolean(const std::string& key, bool fallback) {
    const Json* v = take(key);
    bool value = fallback;
    if (v) {
      if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
      value = v->get<bool>();
    }
    out[key] = value;
    return value;
  }

  std::string choice(const std::string& key, const std::string& fallback, const std::vector<std::string>& options) {
    const Json* v = take(key);
    std::string value = fallback;
    if (v) {
      if (!v->is_string()) throw ConfigError(field(key), "expected a string");
      value = v->get<std::string>();
    }
    if (std::find(options.begin(), options.end(), value) == options.end()) {
      std::string list;
      for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
      throw ConfigError(field(key), "must be one of " + list + ", got '" + value + "'");
    }
    out[key] = value;
    return value;
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback, Range range,
                              std::size_t min_size = 1, std::size_t max_size = 4096) {
    const Json* v = take(key);
    std::vector<double> values = fallback;
    if (v) {
      if (!v->is_array()) throw ConfigError(field(key), "expected an array of numbers");
      values.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) throw ConfigError(field(key), "expected an array of numbers");
        values.push_back(e.get<double>());
      }
    }
    check_size(key, values.size(), min_size, max_size);
    for (double x : values) {
      if (!range.contains(x)) throw ConfigError(field(key), "entries must be in " + range.describe() + ", got " + num(x));
    }
    out[key] = values;
    return values;
  }

  std::vector<std::int64_t> integers(const std::string& key, const std::vector<std::int64_t>& fallback,
                                     std::int64_t lo, std::int64_t hi, std::size_t min_size = 0,
                                     std::size_t max_size = 65536) {
    const Json* v = take(key);
    std::vector<std::int64_t> values = fallback;
    if (v) {
      if (!v->is_array()) throw ConfigError(field(key), "expected an array of integers");
      values.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) throw ConfigError(field(key), "expected an array of integers");
        values.push_back(e.get<std::int64_t>());
      }
    }
    check_size(key, values.size(), min_size, max_size);
    for (auto x : values) {
      if (x < lo || x > hi) {
        throw ConfigError(field(key), "entries must be in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                          "], got " + std::to_string(x));
      }
    }
    out[key] = values;
    return values;
  }

  Fields section(const std::string& key) { return Fields(take(key), field(key)); }

  void attach(const std::string& key, Fields& child) {
    child.finish();
    out[key] = std::move(child.out);
  }

  void finish() const {
    if (!raw_ || raw_->is_null()) return;
    for (const auto& [key, value] : raw_->items()) {
      if (!seen_.count(key)) throw ConfigError(field(key), "unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const Json* take(const std::string& key) {
    seen_.insert(key);
    if (!raw_ || raw_->is_null()) return nullptr;
    auto it = raw_->find(key);
    return it == raw_->end() ? nullptr : &*it;
  }

  void check_size(const std::string& key, std::size_t n, std::size_t lo, std::size_t hi) const {
    if (n < lo || n > hi) {
      throw ConfigError(field(key), "needs between " + std::to_string(lo) + " and " + std::to_string(hi) + " entries");
    }
  }

  const Json* raw_;
  std::string path_;
  std::set<std::string> seen_;
};

// ---- schema -------------------------------------------------------------

double schema_model(Fields& root, const std::vector<std::string>& types, double default_drift) {
  Fields m = root.section("model");
  const std::string type = m.choice("type", types.front(), types);
  const double horizon = m.number("horizon", 1.0, Range::positive());
  if (type == "fbm") {
    m.number("H", 0.7, Range::open(0.0, 1.0));
    m.number("a", default_drift);
  } else if (type == "two_atom") {
    m.number("f1_slope", 1.0);
    m.number("center", 0.5 * horizon, Range::closed(0.0, horizon));
    m.number("exponent", 0.3, Range::positive());
  } else {
    m.integer("n", 4096, 1, 65536);
  }
  root.attach("model", m);
  return horizon;
}

double schema_schedule(Fields& root, double horizon, const std::vector<std::string>& modes) {
  Fields s = root.section("schedule");
  const double t = s.number("t", 0.5 * horizon, Range::closed(0.0, horizon));
  s.choice("mode", modes.front(), modes);
  s.number("h0", t > 0.0 ? t / 16.0 : horizon / 16.0, Range::positive());
  s.number("ratio", 0.5, Range::open(0.0, 1.0));
  s.integer("steps", 20, 2, 60);
  root.attach("schedule", s);
  return t;
}

void schema_conditioning(Fields& root, double horizon, double t, const std::string& model_type,
                         const std::vector<std::string>& types) {
  Fields c = root.section("conditioning");
  const std::string type = c.choice("type", types.front(), types);
  const auto times = c.numbers("times", {t}, Range::closed(0.0, horizon), type == "full" ? 0 : 1);
  c.integers("atoms", {}, 1, 65536);
  if (type == "even" && times.size() != 1) {
    throw ConfigError(c.field("times"), "even-function conditioning takes exactly one time");
  }
  if (type == "full" && model_type == "fbm") {
    throw ConfigError(c.field("type"), "full generator conditioning needs an atom model (two_atom or trig_onb)");
  }
  root.attach("conditioning", c);
}

std::string schema_sampler(Fields& root, const std::vector<std::string>& methods, std::int64_t steps,
                           std::int64_t paths, std::int64_t min_paths = 1) {
  Fields s = root.section("sampler");
  const std::string method = s.choice("method", methods.front(), methods);
  s.choice("scheme", "exact_joint", {"exact_joint", "midpoint"});
  s.integer("steps", steps, 1, std::int64_t{1} << 22);
  s.integer("paths", paths, min_paths, 10'000'000);
  s.unsigned_integer("stream", 0);
  root.attach("sampler", s);
  return method;
}

void schema_for(ExperimentKind kind, Fields& root) {
  switch (kind) {
    case ExperimentKind::cov: {
      const double horizon = schema_model(root, {"fbm"}, 0.0);
      Fields g = root.section("grid");
      g.numbers("times", {0.1 * horizon, 0.3 * horizon, 0.5 * horizon, 0.7 * horizon, 0.9 * horizon},
                Range{0.0, horizon, true, false}, 1, 64);
      root.attach("grid", g);
      break;
    }
    case ExperimentKind::classify: {
      const double horizon = schema_model(root, {"fbm", "two_atom", "trig_onb"}, 0.0);
      const std::string type = root.out["model"]["type"];
      const double t = schema_schedule(root, horizon, {"two_sided", "forward", "backward"});
      schema_conditioning(root, horizon, t, type, {"span", "even", "full"});
      break;
    }
    case ExperimentKind::derivative: {
      const double horizon = schema_model(root, {"fbm"}, 1.0);
      Fields d = root.section("derivative");
      const double t = d.number("t", 0.5 * horizon, Range{0.0, horizon, true, true});
      d.number("s", t, Range::closed(0.0, horizon));
      d.choice("conditioning", "value", {"value", "absolute"});
      const auto hs = d.numbers("hs", {1.0 / 64, 1.0 / 128, 1.0 / 256}, Range::positive(), 1, 32);
      for (double h : hs) {
        if (t + h > horizon) throw ConfigError(d.field("hs"), "t + h exceeds the horizon");
      }
      d.number("alpha", 1.0, Range::positive());
      d.numbers("quantiles", {0.25, 0.5, 0.75}, Range::closed(0.0, 1.0), 1, 99);
      d.choice("estimator", "auto", {"auto", "linear", "kernel"});
      d.number("bandwidth", 0.0, Range::at_least(0.0));
      root.attach("derivative", d);
      schema_sampler(root, {"cholesky", "circulant", "volterra"}, 256, 20000, 1000);
      break;
    }
    case ExperimentKind::renormalize: {
      const double horizon = schema_model(root, {"fbm"}, 0.0);
      const double H = root.out["model"]["H"];
      const double t = schema_schedule(root, horizon, {"forward", "backward"});
      schema_conditioning(root, horizon, t, "fbm", {"span"});
      Fields r = root.section("renormalize");
      r.number("alpha", H < 0.5 ? 2.0 * H : 1.0, Range::positive());
      root.attach("renormalize", r);
      break;
    }
    case ExperimentKind::simulate: {
      schema_model(root, {"fbm"}, 0.0);
      schema_sampler(root, {"circulant", "cholesky", "volterra"}, 64, 1000);
      break;
    }
    case ExperimentKind::girsanov: {
      const double horizon = schema_model(root, {"fbm"}, 1.0);
      Fields s = root.section("sampler");
      s.choice("scheme", "exact_joint", {"exact_joint", "midpoint"});
      s.integer("steps", 64, 32, 4096);
      s.integer("paths", 20000, 2, 10'000'000);
      s.unsigned_integer("stream", 0);
      root.attach("sampler", s);
      Fields p = root.section("probe");
      p.number("s", 0.25 * horizon, Range{0.0, horizon, true, false});
      p.number("t", 0.75 * horizon, Range{0.0, horizon, true, false});
      root.attach("probe", p);
      break;
    }
    case ExperimentKind::embed: {
      Fields e = root.section("equation");
      e.number("a", 1.0);
      e.number("b", 0.5);
      const auto c = e.numbers("c", {1.0, 1.0}, Range{}, 1, kMaxChaosOrder + 1);
      e.number("horizon", 1.0, Range::positive());
      root.attach("equation", e);
      Fields r = root.section("residual");
      r.integer("points", 16, 1, 4096);
      root.attach("residual", r);
      Fields n = root.section("nelson");
      const double horizon = root.out["equation"]["horizon"];
      n.number("t", 0.5 * horizon, Range{0.0, horizon, true, true});
      const auto steps = n.integer("steps", 256, 32, 4096);
      const auto paths = n.integer("paths", 20000, 0, 10'000'000);
      n.integers("hs_steps", {16, 8, 4}, 1, steps, 1, 32);
      if (paths > 0 && c.size() > 2) {
        throw ConfigError(n.field("paths"),
                          "the Monte Carlo check needs c of length <= 2 (set paths = 0 to skip it)");
      }
      if (paths > 0 && paths < 1000) throw ConfigError(n.field("paths"), "needs at least 1000 paths (or 0)");
      root.attach("nelson", n);
      break;
    }
    case ExperimentKind::counterexample: {
      Fields o = root.section("onb");
      const auto n = o.integer("n", 4096, 1, 65536);
      o.number("t", 0.5, Range::open(0.0, 1.0));
      o.number("h", 1.0 / 256, Range::open(0.0, 0.5));
      o.integers("atoms", {1, 2, 3, 4, 5, 6, 7, 8, 1024, 4096}, 1, n, 0, 65536);
      root.attach("onb", o);
      Fields a = root.section("two_atom");
      a.number("f1_slope", 1.0);
      a.number("center", 0.5, Range::open(0.0, 1.0));
      a.number("exponent", 0.3, Range::positive());
      root.attach("two_atom", a);
      break;
    }
    case ExperimentKind::paper_suite: {
      Fields s = root.section("suite");
      s.boolean("circulant", true);
      s.boolean("determinism", true);
      s.number("exact_tolerance", 1e-6, Range::positive());
      root.attach("suite", s);
      break;
    }
  }
}

// ---- typed views of the normalized config --------------------------------

ModelSpec model_of(const Json& m) {
  const std::string type = m["type"];
  const double horizon = m["horizon"];
  if (type == "fbm") {
    ModelSpec model = ModelSpec::fbm(m["H"].get<double>(), horizon);
    const double a = m["a"];
    if (a != 0.0) model.mean = DriftSpec(m["H"].get<double>(), constant_function(a), horizon).mean_function();
    return model;
  }
  if (type == "two_atom") {
    return {TwoAtom{linear_function(m["f1_slope"].get<double>()),
                    power_abs(m["center"].get<double>(), m["exponent"].get<double>())},
            horizon, std::nullopt};
  }
  return {BasisExpansion{trig_onb_primitives(m["n"].get<std::size_t>()), 1.0}, horizon, std::nullopt};
}

QuotientMode mode_of(const std::string& s) {
  if (s == "forward") return QuotientMode::forward;
  if (s == "backward") return QuotientMode::backward;
  return QuotientMode::two_sided;
}

QuotientSchedule schedule_of(const Json& s) {
  return {s["h0"].get<double>(), s["ratio"].get<double>(), s["steps"].get<int>(), mode_of(s["mode"])};
}

ConditioningSpec conditioning_of(const Json& c) {
  const std::string type = c["type"];
  const auto times = c["times"].get<std::vector<double>>();
  if (type == "even") return EvenFunctionOf{FirstChaosVariable::point(times.at(0))};
  if (type == "full") {
    std::vector<std::size_t> atoms;
    for (auto a : c["atoms"].get<std::vector<std::int64_t>>()) atoms.push_back(static_cast<std::size_t>(a - 1));
    return FullGenerators{atoms};
  }
  LinearSpan span;
  for (double t : times) span.vars.push_back(FirstChaosVariable::point(t));
  return span;
}

SamplerMethod method_of(const std::string& s) {
  if (s == "cholesky") return SamplerMethod::cholesky;
  if (s == "volterra") return SamplerMethod::volterra;
  return SamplerMethod::circulant;
}

SamplerOptions sampler_options(const Json& cfg, const Json& s) {
  SamplerOptions o;
  o.stream = s["stream"].get<std::uint64_t>();
  o.threads = cfg["threads"].get<unsigned>();
  o.scheme = s["scheme"] == "midpoint" ? VolterraScheme::midpoint : VolterraScheme::exact_joint;
  return o;
}

// Checks the parts of a config that only the library can judge (model bounds,
// schedule fits in [0, T], atom indices), reporting them as config errors.
void semantic_check(ExperimentKind kind, const Json& cfg) {
  auto guard = [](const std::string& field, auto&& fn) {
    try {
      fn();
    } catch (const DomainError& e) {
      throw ConfigError(field, e.what());
    }
  };
  if (cfg.contains("model")) guard("model", [&] { model_of(cfg["model"]).validate(); });
  if (cfg.contains("schedule")) {
    guard("schedule", [&] {
      schedule_of(cfg["schedule"]).validate(cfg["schedule"]["t"].get<double>(), cfg["model"]["horizon"].get<double>());
    });
  }
  if (cfg.contains("conditioning") && cfg["conditioning"]["type"] == "full") {
    const std::size_t count = model_of(cfg["model"]).atom_count();
    for (auto a : cfg["conditioning"]["atoms"].get<std::vector<std::int64_t>>()) {
      if (static_cast<std::size_t>(a) > count) {
        throw ConfigError("conditioning.atoms", "atom " + std::to_string(a) + " exceeds the model's " +
                                                    std::to_string(count) + " atoms");
      }
    }
  }
  if (kind == ExperimentKind::derivative && cfg["sampler"]["method"] != "cholesky") {
    const double dt = cfg["model"]["horizon"].get<double>() / cfg["sampler"]["steps"].get<double>();
    auto on_grid = [&](double x) { return std::abs(x / dt - std::round(x / dt)) < 1e-9; };
    const auto& d = cfg["derivative"];
    bool ok = on_grid(d["t"]) && on_grid(d["s"]);
    for (double h : d["hs"].get<std::vector<double>>()) ok = ok && on_grid(d["t"].get<double>() + h);
    if (!ok) throw ConfigError("derivative", "t, s and t + h must be nodes of the uniform sampler grid");
  }
}

// ---- runners --------------------------------------------------------------

struct RunContext {
  const Json& cfg;
  fs::path dir;
  ArtifactBundle& bundle;
  Json timing = Json::object();

  fs::path file(const std::string& name) {
    bundle.files.push_back(name);
    return dir / name;
  }
  std::uint64_t seed() const { return cfg["seed"].get<std::uint64_t>(); }
};

std::string capitalized(const char* s) {
  std::string out = s;
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::string verdict_summary(const Verdict& v) {
  std::string out = capitalized(to_string(v.kind)) + ", ";
  switch (v.kind) {
    case VerdictKind::differentiates: {
      std::string coeffs;
      for (double c : v.derivative.coefficients) coeffs += (coeffs.empty() ? "" : ";") + num(c);
      out += "coeff=" + (coeffs.empty() ? std::string("none") : coeffs);
      if (std::abs(v.derivative.constant) > 0.0) out += " constant=" + num(v.derivative.constant);
      break;
    }
    case VerdictKind::degenerates: out += "constant=" + num(v.constant()); break;
    default: out += "slope=" + num(v.slope) + " r2=" + num(v.r_squared); break;
  }
  return out;
}

void run_cov(RunContext& ctx) {
  const auto& m = ctx.cfg["model"];
  const double H = m["H"];
  const auto times = ctx.cfg["grid"]["times"].get<std::vector<double>>();
  boost::math::quadrature::tanh_sinh<double> quad;
  CsvWriter csv(ctx.file("covariance.csv"), {"s", "t", "covariance", "kernel_integral", "abs_error"});
  double worst = 0.0;
  for (double s : times) {
    for (double t : times) {
      const double lo = std::min(s, t);
      auto f = [&](double u) { return u <= 0.0 || u >= lo ? 0.0 : kernel_KH(H, s, u) * kernel_KH(H, t, u); };
      const double integral = quad.integrate(f, 0.0, lo, 1e-9);
      const double cov = fbm_cov(H, s, t);
      worst = std::max(worst, std::abs(integral - cov));
      csv.row({s, t, cov, integral, std::abs(integral - cov)});
    }
  }
  ctx.bundle.summary = "max |int K K - R_H| = " + num(worst);
}

void run_classify(RunContext& ctx) {
  const auto model = model_of(ctx.cfg["model"]);
  const double t = ctx.cfg["schedule"]["t"];
  const auto v = classify(model, t, conditioning_of(ctx.cfg["conditioning"]), schedule_of(ctx.cfg["schedule"]));

  std::vector<std::pair<std::string, const Verdict*>> sides;
  if (v.one_sided.size() == 2) {
    sides = {{"forward", &v.one_sided[0]}, {"backward", &v.one_sided[1]}};
  } else {
    sides = {{ctx.cfg["schedule"]["mode"].get<std::string>(), &v}};
  }
  std::size_t dims = 0;
  for (const auto& [name, side] : sides) {
    for (const auto& row : side->evidence) dims = std::max(dims, row.quotient.coefficients.size());
  }
  std::vector<std::string> header = {"side", "h", "l2_norm", "constant"};
  for (std::size_t i = 0; i < dims; ++i) header.push_back("coef_" + std::to_string(i + 1));
  CsvWriter evidence(ctx.file("evidence.csv"), header);
  for (const auto& [name, side] : sides) {
    for (const auto& row : side->evidence) {
      std::vector<CsvCell> cells = {name, row.h, row.l2_norm, row.quotient.constant};
      for (std::size_t i = 0; i < dims; ++i) {
        cells.emplace_back(i < row.quotient.coefficients.size() ? row.quotient.coefficients[i] : 0.0);
      }
      evidence.row(cells);
    }
  }
  CsvWriter verdict(ctx.file("verdict.csv"), {"verdict", "detail"});
  ctx.bundle.summary = verdict_summary(v);
  verdict.raw_line(ctx.bundle.summary);
}

void run_derivative(RunContext& ctx) {
  const auto& m = ctx.cfg["model"];
  const auto& d = ctx.cfg["derivative"];
  const auto& s = ctx.cfg["sampler"];
  const double H = m["H"], horizon = m["horizon"], t = d["t"], cond_s = d["s"], alpha = d["alpha"];
  const auto hs = d["hs"].get<std::vector<double>>();
  const auto levels = d["quantiles"].get<std::vector<double>>();
  const DriftSpec drift(H, constant_function(m["a"].get<double>()), horizon);
  const SamplerMethod method = method_of(s["method"]);

  std::vector<double> grid;
  if (method == SamplerMethod::cholesky) {
    grid = {0.0, t, cond_s};
    for (double h : hs) grid.push_back(t + h);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  } else {
    grid = uniform_grid(horizon, s["steps"].get<std::size_t>());
  }
  const auto batch = FbmSampler(method, H, grid, sampler_options(ctx.cfg, s))
                         .sample(ctx.seed(), 0, s["paths"].get<std::size_t>());
  const auto z = make_shifted(batch, drift);

  const bool absolute = d["conditioning"] == "absolute";
  std::optional<EstimatorSpec> est;
  if (d["estimator"] != "auto") {
    est = EstimatorSpec{d["estimator"] == "kernel" ? EstimatorKind::kernel : EstimatorKind::linear, std::nullopt};
  }
  if (d["bandwidth"].get<double>() > 0.0) {
    if (!est) est = EstimatorSpec{absolute ? EstimatorKind::kernel : EstimatorKind::linear, std::nullopt};
    est->bandwidth = d["bandwidth"].get<double>();
  }
  const auto mc = mc_stochastic_derivative(
      z, t, {absolute ? McConditioningKind::absolute : McConditioningKind::value, cond_s}, hs, alpha, levels, est);

  ModelSpec model = ModelSpec::fbm(H, horizon);
  model.mean = drift.mean_function();
  CsvWriter csv(ctx.file("mc_derivative.csv"), {"h", "quantile", "query", "estimate", "se", "reference"});
  for (const auto& row : mc.rows) {
    std::optional<AffineCombination> exact;
    if (!absolute) exact = difference_quotient(model, t, row.h, LinearSpan{{FirstChaosVariable::point(cond_s)}});
    for (std::size_t q = 0; q < mc.query.size(); ++q) {
      double reference = NAN;
      if (exact) {
        const double y = mc.query[q] + drift.m(cond_s);
        reference = (exact->constant + exact->coefficients[0] * y) * std::pow(row.h, 1.0 - alpha);
      } else if (alpha == 1.0) {
        reference = drift.mu(t);
      }
      csv.row({row.h, levels[q], mc.query[q], row.fit.estimate[q], row.fit.standard_error[q], reference});
    }
  }
  CsvWriter summary(ctx.file("stability.csv"), {"stable", "max_jump_se"});
  summary.row({mc.stable, mc.max_jump});
  ctx.bundle.summary = std::string(mc.stable ? "stable" : "not stable") + " across h, max jump " +
                       num(mc.max_jump) + " SE";
}

void run_renormalize(RunContext& ctx) {
  const auto model = model_of(ctx.cfg["model"]);
  const double t = ctx.cfg["schedule"]["t"];
  const double alpha = ctx.cfg["renormalize"]["alpha"];
  const auto spec = conditioning_of(ctx.cfg["conditioning"]);
  const auto schedule = schedule_of(ctx.cfg["schedule"]);
  const QuotientEngine engine(model, t, spec);
  CsvWriter rate(ctx.file("rate.csv"), {"h", "l2_norm", "renormalized_l2_norm"});
  for (double h : schedule.signed_steps(schedule.mode)) {
    const double norm = engine.l2_norm(engine.at(h));
    rate.row({h, norm, std::pow(std::abs(h), 1.0 - alpha) * norm});
  }
  const auto fit = rate_exponent(model, t, spec, schedule);
  const auto limit = renormalized_limit(model, t, spec, alpha, schedule);
  const std::size_t dims = engine.dimension();
  std::vector<std::string> header = {"alpha", "slope", "r_squared", "exists", "constant"};
  for (std::size_t i = 0; i < dims; ++i) header.push_back("coef_" + std::to_string(i + 1));
  CsvWriter out(ctx.file("renormalized.csv"), header);
  std::vector<CsvCell> cells = {alpha, fit.fit.slope, fit.fit.r_squared, limit.has_value(),
                                limit ? limit->constant : NAN};
  for (std::size_t i = 0; i < dims; ++i) cells.emplace_back(limit ? limit->coefficients[i] : NAN);
  out.row(cells);
  ctx.bundle.summary = "rate slope " + num(fit.fit.slope) +
                       (limit ? ", renormalized limit coeff=" + (dims ? num(limit->coefficients[0]) : "none")
                              : ", no renormalized limit");
}

void probe_moments(CsvWriter& csv, const PathBatch& batch, const RowMatrix& values, double H, double offset_scale) {
  const std::size_t n = batch.nodes() - 1;
  const std::vector<std::pair<std::size_t, std::size_t>> pairs = {
      {std::max<std::size_t>(n / 4, 1), std::max<std::size_t>(n / 2, 1)}, {std::max<std::size_t>(n / 2, 1), n}, {n, n}};
  const double paths = static_cast<double>(batch.paths());
  for (auto [i, j] : pairs) {
    const Eigen::VectorXd x = values.col(static_cast<Eigen::Index>(i)).cwiseProduct(values.col(static_cast<Eigen::Index>(j)));
    const double mean = x.mean();
    const double se = paths > 1 ? std::sqrt((x.array() - mean).square().sum() / (paths - 1) / paths) : NAN;
    csv.row({batch.grid[i], batch.grid[j], mean, se, fbm_cov(H, batch.grid[i], batch.grid[j]) + offset_scale});
  }
}

void run_simulate(RunContext& ctx) {
  const auto& m = ctx.cfg["model"];
  const auto& s = ctx.cfg["sampler"];
  const double H = m["H"], horizon = m["horizon"], a = m["a"];
  const auto grid = uniform_grid(horizon, s["steps"].get<std::size_t>());
  FbmSampler sampler(method_of(s["method"]), H, grid, sampler_options(ctx.cfg, s));
  PathBatch batch = sampler.sample(ctx.seed(), 0, s["paths"].get<std::size_t>());
  if (a != 0.0) batch = make_shifted(batch, DriftSpec(H, constant_function(a), horizon));

  if (ctx.cfg["format"] == "binary") {
    std::ofstream out(ctx.file("paths.bin"), std::ios::binary);
    write_binary(batch, out);
  } else {
    std::ofstream out(ctx.file("paths.csv"), std::ios::binary);
    write_csv(batch, out);
  }
  CsvWriter moments(ctx.file("moments.csv"), {"s", "t", "second_moment", "se", "covariance"});
  probe_moments(moments, batch, batch.b, H, 0.0);
  ctx.bundle.summary = std::to_string(batch.paths()) + " paths on " + std::to_string(batch.nodes()) + " nodes (" +
                       s["method"].get<std::string>() + ")";
}

void run_girsanov(RunContext& ctx) {
  const auto& m = ctx.cfg["model"];
  const auto& s = ctx.cfg["sampler"];
  const double H = m["H"], horizon = m["horizon"];
  const DriftSpec drift(H, constant_function(m["a"].get<double>()), horizon);
  const auto grid = uniform_grid(horizon, s["steps"].get<std::size_t>());
  const auto batch = FbmSampler(SamplerMethod::volterra, H, grid, sampler_options(ctx.cfg, s))
                         .sample(ctx.seed(), 0, s["paths"].get<std::size_t>());
  const auto z = make_shifted(batch, drift);
  const Eigen::VectorXd eta = girsanov_weights(batch, drift);
  const double ps = ctx.cfg["probe"]["s"], pt = ctx.cfg["probe"]["t"];
  const auto i = static_cast<Eigen::Index>(batch.node_index(ps));
  const auto j = static_cast<Eigen::Index>(batch.node_index(pt));
  const Eigen::VectorXd zz = z.z->col(i).cwiseProduct(z.z->col(j));

  const double n = static_cast<double>(eta.size());
  auto moment = [n](const Eigen::VectorXd& x) {
    const double mean = x.mean();
    return std::pair{mean, std::sqrt((x.array() - mean).square().sum() / (n - 1) / n)};
  };
  const double target = fbm_cov(H, ps, pt);
  CsvWriter csv(ctx.file("girsanov.csv"), {"quantity", "estimate", "se", "target", "z"});
  auto put = [&](const std::string& name, std::pair<double, double> m2, double ref) {
    csv.row({name, m2.first, m2.second, ref, std::abs(m2.first - ref) / m2.second});
  };
  const auto me = moment(eta);
  const auto mw = moment(zz.cwiseProduct(eta));
  const auto mu = moment(zz);
  put("mean_eta", me, 1.0);
  put("weighted_second_moment", mw, target);
  put("unweighted_second_moment", mu, target);
  ctx.bundle.summary = "mean eta " + num(me.first) + ", weighted z " + num(std::abs(mw.first - target) / mw.second) +
                       ", unweighted z " + num(std::abs(mu.first - target) / mu.second);
}

void run_embed(RunContext& ctx) {
  const auto& e = ctx.cfg["equation"];
  const double a = e["a"], b = e["b"], horizon = e["horizon"];
  const auto x = solve_linear_embedding(a, b, e["c"].get<std::vector<double>>(), horizon);
  const auto points = ctx.cfg["residual"]["points"].get<int>();
  CsvWriter res(ctx.file("residual.csv"), {"t", "mean", "residual"});
  double worst = 0.0;
  for (int k = 1; k <= points; ++k) {
    const double t = horizon * k / (points + 1.0);
    const double r = embedding_residual(x, a, b, t);
    worst = std::max(worst, r);
    res.row({t, x.mean(t), r});
  }
  ctx.bundle.summary = "max residual " + num(worst);

  const auto& n = ctx.cfg["nelson"];
  const auto paths = n["paths"].get<std::size_t>();
  if (paths == 0) return;
  const auto steps = n["steps"].get<std::size_t>();
  std::vector<double> hs;
  for (auto k : n["hs_steps"].get<std::vector<std::int64_t>>()) hs.push_back(horizon * k / steps);
  SamplerOptions o;
  o.threads = ctx.cfg["threads"].get<unsigned>();
  const auto w = FbmSampler(SamplerMethod::volterra, 0.5, uniform_grid(horizon, steps), o).sample(ctx.seed(), 0, paths);
  const auto check = mc_verify_nelson(x, n["t"].get<double>(), hs, w);
  CsvWriter csv(ctx.file("nelson.csv"),
                {"h", "slope", "slope_se", "intercept", "intercept_se", "expected_slope", "expected_intercept"});
  for (const auto& row : check.rows) {
    csv.row({row.h, row.fit.slope, row.fit.slope_se, row.fit.intercept, row.fit.intercept_se, row.expected_slope,
             row.expected_intercept});
  }
  ctx.bundle.summary += ", Nelson check max z " + num(check.max_z);
}

void run_counterexample(RunContext& ctx) {
  const auto& o = ctx.cfg["onb"];
  const auto N = o["n"].get<std::size_t>();
  const double t = o["t"], h = o["h"];
  const auto functions = trig_onb_primitives(N);
  const ModelSpec onb{BasisExpansion{functions, 1.0}, 1.0, std::nullopt};
  CsvWriter parseval(ctx.file("parseval.csv"), {"n", "sum", "inverse_h"});
  double last = 0.0;
  for (std::size_t n = 1;; n *= 2) {
    const std::size_t k = std::min(n, N);
    last = parseval_divergence(onb, t, h, k);
    parseval.row({k, last, 1.0 / h});
    if (k == N) break;
  }
  CsvWriter atoms(ctx.file("atoms.csv"), {"atom", "verdict", "coefficient", "f_prime"});
  const auto schedule = QuotientSchedule::defaults(t);
  std::size_t good = 0, total = 0;
  for (auto i : o["atoms"].get<std::vector<std::int64_t>>()) {
    const auto k = static_cast<std::size_t>(i - 1);
    const auto v = classify(onb, t, FullGenerators{{k}}, schedule);
    const double fp = functions[k].derivative_at(t, Side::two_sided).value_or(NAN);
    atoms.row({i, to_string(v.kind), v.derivative.coefficients.empty() ? NAN : v.derivative.coefficients[0], fp});
    good += v.differentiates() ? 1 : 0;
    ++total;
  }
  const auto& ta = ctx.cfg["two_atom"];
  const double center = ta["center"];
  const ModelSpec two{TwoAtom{linear_function(ta["f1_slope"].get<double>()),
                              power_abs(center, ta["exponent"].get<double>())},
                      1.0, std::nullopt};
  const auto full = classify(two, center, FullGenerators{}, QuotientSchedule::defaults(center, QuotientMode::forward));
  const auto first = classify(two, center, FullGenerators{{0}}, QuotientSchedule::defaults(center));
  CsvWriter pair(ctx.file("two_atom.csv"), {"conditioning", "verdict", "detail"});
  pair.row({"N1,N2", to_string(full.kind), verdict_summary(full)});
  pair.row({"N1", to_string(first.kind), verdict_summary(first)});
  ctx.bundle.summary = "Parseval sum " + num(last) + " vs 1/h = " + num(1.0 / h) + "; " +
                       std::to_string(good) + "/" + std::to_string(total) + " single atoms differentiate; two-atom: " +
                       to_string(full.kind) + " / " + to_string(first.kind);
}

void run_paper_suite(RunContext& ctx) {
  const auto& s = ctx.cfg["suite"];
  SuiteOptions options;
  options.seed = ctx.seed();
  options.threads = ctx.cfg["threads"].get<unsigned>();
  options.circulant = s["circulant"];
  options.determinism = s["determinism"];
  options.exact_tolerance = s["exact_tolerance"].get<double>();
  options.data_dir = ctx.dir / "data";
  const auto report = paper_suite(options);
  for (const auto& entry : fs::directory_iterator(options.data_dir)) {
    ctx.bundle.files.push_back("data/" + entry.path().filename().string());
  }
  std::sort(ctx.bundle.files.begin(), ctx.bundle.files.end());
  {
    std::ofstream out(ctx.file("report.csv"), std::ios::binary);
    write_report_csv(report, out);
  }
  {
    Json json = report_json(report);
    Json timings = Json::object();
    for (auto& c : json["criteria"]) {
      timings[c["id"].get<std::string>()] = c["seconds"];
      c.erase("seconds");
    }
    ctx.timing["criteria_seconds"] = timings;
    std::ofstream out(ctx.file("report.json"), std::ios::binary);
    out << json.dump(2) << '\n';
  }
  ctx.bundle.passed = report.passed();
  ctx.bundle.summary = std::to_string(report.count(CriterionStatus::pass)) + " passed, " +
                       std::to_string(report.count(CriterionStatus::fail)) + " failed, " +
                       std::to_string(report.count(CriterionStatus::skipped)) + " skipped";
}

std::string plot_script(ExperimentKind kind, const Json& cfg) {
  std::string body;
  switch (kind) {
    case ExperimentKind::cov:
      body = "set xlabel 'pair'\nset ylabel 'abs error'\nplot 'covariance.csv' using 0:5 with linespoints\n";
      break;
    case ExperimentKind::classify:
      body = "set logscale xy\nset xlabel '|h|'\nset ylabel 'L2 norm of quotient'\n"
             "plot 'evidence.csv' using (abs($2)):3 with linespoints\n";
      break;
    case ExperimentKind::derivative:
      body = "set logscale x\nset xlabel 'h'\n"
             "plot 'mc_derivative.csv' using 1:4:5 with yerrorbars, '' using 1:6 with points\n";
      break;
    case ExperimentKind::renormalize:
      body = "set logscale xy\nset xlabel '|h|'\n"
             "plot 'rate.csv' using (abs($1)):2 with linespoints, '' using (abs($1)):3 with linespoints\n";
      break;
    case ExperimentKind::simulate:
      body = cfg["format"] == "binary"
                 ? "plot 'moments.csv' using 0:3:4 with yerrorbars, '' using 0:5 with points\n"
                 : "set xlabel 't'\nplot 'paths.csv' using 2:4 with dots notitle\n";
      break;
    case ExperimentKind::girsanov:
      body = "set xtics rotate\nplot 'girsanov.csv' using 0:2:3:xtic(1) with yerrorbars, '' using 0:4 with points\n";
      break;
    case ExperimentKind::embed:
      body = "set logscale y\nset xlabel 't'\nplot 'residual.csv' using 1:(abs($3)+1e-18) with linespoints\n";
      break;
    case ExperimentKind::counterexample:
      body = "set logscale x\nset xlabel 'N'\nplot 'parseval.csv' using 1:2 with linespoints, '' using 1:3 with lines\n";
      break;
    case ExperimentKind::paper_suite:
      return "";
  }
  return "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n"
         "set output '" + std::string(info(kind).name) + ".png'\n" + body;
}

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return hex64(fnv1a64(s.str()));
}

Json versions() {
  Json v = Json::object();
  v["gderiv"] = kVersion;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["boost"] = BOOST_LIB_VERSION;
  v["fftw"] = std::string(fftw_version);
  v["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                       "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  v["compiler"] = __VERSION__;
  return v;
}

}  // namespace

const char* to_string(ExperimentKind kind) { return info(kind).name; }

ExperimentKind parse_kind(const std::string& name) {
  for (const auto& k : kind_table()) {
    std::string alt = k.name;
    std::replace(alt.begin(), alt.end(), '-', '_');
    if (name == k.name || name == alt) return k.kind;
  }
  throw ConfigError("kind", "unknown experiment kind '" + name + "'");
}

const std::vector<ExperimentKind>& all_kinds() {
  static const std::vector<ExperimentKind> kinds = [] {
    std::vector<ExperimentKind> out;
    for (const auto& k : kind_table()) out.push_back(k.kind);
    return out;
  }();
  return kinds;
}

const std::vector<std::string>& operations_of(ExperimentKind kind) { return info(kind).operations; }

std::string ExperimentConfig::canonical() const { return normalized.dump(); }

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(canonical())); }

ExperimentConfig normalize_config(ExperimentKind kind, const Json& raw, const ConfigOverrides& overrides) {
  Json merged = raw.is_null() ? Json::object() : raw;
  if (!merged.is_object()) throw ConfigError("<root>", "expected a table");
  if (overrides.seed) merged["seed"] = *overrides.seed;
  if (overrides.threads) merged["threads"] = *overrides.threads;
  if (overrides.format) merged["format"] = *overrides.format;

  if (merged.contains("kind")) {
    const auto& k = merged["kind"];
    if (!k.is_string()) throw ConfigError("kind", "expected a string");
    if (parse_kind(k.get<std::string>()) != kind) {
      throw ConfigError("kind", "config is for '" + k.get<std::string>() + "', not '" + to_string(kind) + "'");
    }
    merged.erase("kind");
  }
  Fields root(&merged, "");
  root.out["kind"] = to_string(kind);
  root.unsigned_integer("seed", kDefaultSeed);
  root.integer("threads", 1, 1, 1024);
  root.choice("format", "csv", {"csv", "binary"});
  schema_for(kind, root);
  root.finish();
  semantic_check(kind, root.out);
  return {kind, std::move(root.out)};
}

ArtifactBundle run_experiment(const ExperimentConfig& config, const fs::path& out) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  fs::create_directories(out);
  ArtifactBundle bundle;
  bundle.dir = out;
  RunContext ctx{config.normalized, out, bundle};
  switch (config.kind) {
    case ExperimentKind::cov: run_cov(ctx); break;
    case ExperimentKind::classify: run_classify(ctx); break;
    case ExperimentKind::derivative: run_derivative(ctx); break;
    case ExperimentKind::renormalize: run_renormalize(ctx); break;
    case ExperimentKind::simulate: run_simulate(ctx); break;
    case ExperimentKind::girsanov: run_girsanov(ctx); break;
    case ExperimentKind::embed: run_embed(ctx); break;
    case ExperimentKind::counterexample: run_counterexample(ctx); break;
    case ExperimentKind::paper_suite: run_paper_suite(ctx); break;
  }

  const std::string plot = plot_script(config.kind, config.normalized);
  if (!plot.empty()) {
    std::ofstream p(out / "plot.gp", std::ios::binary);
    p << plot;
  }
  Json outputs = Json::object();
  for (const auto& f : bundle.files) outputs[f] = file_hash(out / f);
  Json manifest = {{"kind", to_string(config.kind)},
                   {"config", config.normalized},
                   {"config_hash", config.hash()},
                   {"operations", operations_of(config.kind)},
                   {"outputs", outputs},
                   {"passed", bundle.passed},
                   {"summary", bundle.summary},
                   {"versions", versions()}};
  {
    std::ofstream m(out / "manifest.json", std::ios::binary);
    m << manifest.dump(2) << '\n';
  }
  ctx.timing["wall_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
  {
    std::ofstream t(out / "timing.json", std::ios::binary);
    t << ctx.timing.dump(2) << '\n';
  }
  return bundle;
}

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError&) {
    return exit_config;
  } catch (const DomainError&) {
    return exit_config;
  } catch (const PreconditionFailed&) {
    return exit_numerical;
  } catch (const SingularSpan&) {
    return exit_numerical;
  } catch (const DegenerateVariable&) {
    return exit_numerical;
  } catch (const DegenerateFamily&) {
    return exit_numerical;
  } catch (const ResolutionError&) {
    return exit_numerical;
  } catch (const EvaluationError&) {
    return exit_numerical;
  } catch (...) {
    return 1;
  }
}

}  // namespace gderiv
