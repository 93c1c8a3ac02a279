#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gderiv/experiments.hpp"

using namespace gderiv;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string last_line(const std::string& text) {
  auto end = text.find_last_not_of('\n');
  auto start = text.rfind('\n', end);
  return text.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gderiv-test-" + name);
  fs::remove_all(dir);
  return dir;
}

std::string field_of_error(ExperimentKind kind, const std::string& toml) {
  try {
    normalize_config(kind, parse_toml(toml));
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "none";
}

}  // namespace

TEST_CASE("kind names") {
  for (auto k : all_kinds()) {
    CHECK(parse_kind(to_string(k)) == k);
    CHECK_FALSE(operations_of(k).empty());
  }
  CHECK(parse_kind("paper_suite") == ExperimentKind::paper_suite);
  CHECK_THROWS_AS(parse_kind("plot"), ConfigError);
}

TEST_CASE("normalization fills defaults and is canonical") {
  const auto a = normalize_config(ExperimentKind::classify, parse_toml("[model]\nH = 0.7\n"));
  CHECK(a.normalized["schedule"]["h0"] == 0.5 / 16);
  CHECK(a.normalized["conditioning"]["times"][0] == 0.5);
  CHECK(a.normalized["seed"] == 20240601u);

  // Re-normalizing the canonical form is a fixed point.
  const auto b = normalize_config(ExperimentKind::classify, Json::parse(a.canonical()));
  CHECK(a.canonical() == b.canonical());
  CHECK(a.hash() == b.hash());

  // TOML and JSON spellings of the same config agree.
  const auto c = normalize_config(ExperimentKind::classify, parse_config_text("{\"model\": {\"H\": 0.7}}"));
  CHECK(c.hash() == a.hash());

  const auto d = normalize_config(ExperimentKind::classify, parse_toml("[model]\nH = 0.71\n"));
  CHECK(d.hash() != a.hash());
}

TEST_CASE("overrides take precedence") {
  ConfigOverrides o;
  o.seed = 7;
  o.threads = 2;
  o.format = "binary";
  const auto c = normalize_config(ExperimentKind::simulate, parse_toml("seed = 1\n"), o);
  CHECK(c.normalized["seed"] == 7u);
  CHECK(c.normalized["threads"] == 2);
  CHECK(c.normalized["format"] == "binary");
}

TEST_CASE("config errors name the field") {
  CHECK(field_of_error(ExperimentKind::classify, "[model]\nH = 1.5\n") == "model.H");
  CHECK(field_of_error(ExperimentKind::classify, "[model]\nHurst = 0.5\n") == "model.Hurst");
  CHECK(field_of_error(ExperimentKind::classify, "colour = 1\n") == "colour");
  CHECK(field_of_error(ExperimentKind::classify, "model = 3\n") == "model");
  CHECK(field_of_error(ExperimentKind::classify, "[schedule]\nmode = \"sideways\"\n") == "schedule.mode");
  CHECK(field_of_error(ExperimentKind::classify, "[schedule]\nratio = 1\n") == "schedule.ratio");
  CHECK(field_of_error(ExperimentKind::classify, "[conditioning]\ntype = \"even\"\ntimes = [0.2, 0.3]\n") ==
        "conditioning.times");
  CHECK(field_of_error(ExperimentKind::classify, "[conditioning]\ntype = \"full\"\n") == "conditioning.type");
  CHECK(field_of_error(ExperimentKind::classify,
                       "[model]\ntype = \"two_atom\"\n[conditioning]\ntype = \"full\"\natoms = [3]\n") ==
        "conditioning.atoms");
  CHECK(field_of_error(ExperimentKind::classify, "[schedule]\nt = 0.9\nmode = \"forward\"\nh0 = 0.5\n") == "schedule");
  CHECK(field_of_error(ExperimentKind::classify, "kind = \"cov\"\n") == "kind");
  CHECK(field_of_error(ExperimentKind::simulate, "[sampler]\npaths = 0\n") == "sampler.paths");
  CHECK(field_of_error(ExperimentKind::simulate, "seed = -1\n") == "seed");
  CHECK(field_of_error(ExperimentKind::renormalize, "[schedule]\nmode = \"two_sided\"\n") == "schedule.mode");
  CHECK(field_of_error(ExperimentKind::embed, "[equation]\nc = [1, 2, 3]\n") == "nelson.paths");
  CHECK(field_of_error(ExperimentKind::derivative, "[derivative]\nt = 0.99\n") == "derivative.hs");
  CHECK(field_of_error(ExperimentKind::derivative, "[sampler]\nmethod = \"circulant\"\nsteps = 100\n") ==
        "derivative");
  CHECK(field_of_error(ExperimentKind::paper_suite, "[suite]\nexact_tolerance = 0\n") == "suite.exact_tolerance");
}

TEST_CASE("classify run writes the verdict") {
  const auto dir = scratch("classify");
  const auto config = normalize_config(ExperimentKind::classify,
                                       parse_toml("[model]\nH = 0.7\n[schedule]\nt = 0.5\n"
                                                  "[conditioning]\ntype = \"span\"\ntimes = [0.5]\n"));
  const auto bundle = run_experiment(config, dir);
  CHECK(bundle.passed);
  CHECK(last_line(slurp(dir / "verdict.csv")) == "Differentiates, coeff=1.4");
  CHECK(fs::exists(dir / "evidence.csv"));
  CHECK(fs::exists(dir / "plot.gp"));

  const auto manifest = Json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["config_hash"] == config.hash());
  CHECK(manifest["config"] == config.normalized);
  CHECK(manifest["outputs"].contains("verdict.csv"));
  CHECK_FALSE(manifest["operations"].empty());
  CHECK(manifest["versions"].contains("eigen"));
  CHECK(Json::parse(slurp(dir / "timing.json")).contains("wall_seconds"));
  fs::remove_all(dir);
}

TEST_CASE("same config and seed give byte-identical outputs") {
  const std::vector<std::pair<ExperimentKind, std::string>> cases = {
      {ExperimentKind::cov, "[grid]\ntimes = [0.25, 0.75]\n"},
      {ExperimentKind::simulate, "[sampler]\npaths = 50\nsteps = 32\nmethod = \"volterra\"\n"},
      {ExperimentKind::simulate, "format = \"binary\"\n[sampler]\npaths = 20\n"},
      {ExperimentKind::girsanov, "[sampler]\npaths = 500\n"},
      {ExperimentKind::embed, "[nelson]\npaths = 2000\nsteps = 64\nhs_steps = [4, 2]\n"},
      {ExperimentKind::renormalize, "[model]\nH = 0.3\n[schedule]\nt = 0.5\nsteps = 12\n"},
      {ExperimentKind::derivative, "[sampler]\npaths = 2000\n"},
      {ExperimentKind::counterexample, "[onb]\nn = 64\natoms = [1, 64]\n"},
  };
  int index = 0;
  for (const auto& [kind, toml] : cases) {
    CAPTURE(toml);
    const auto config = normalize_config(kind, parse_toml(toml));
    const auto a = scratch("det-a" + std::to_string(index));
    const auto b = scratch("det-b" + std::to_string(index));
    ++index;
    const auto ra = run_experiment(config, a);
    run_experiment(config, b);
    REQUIRE_FALSE(ra.files.empty());
    for (const auto& f : ra.files) {
      CAPTURE(f);
      CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
    fs::remove_all(a);
    fs::remove_all(b);
  }
}

TEST_CASE("numerical failures keep their type") {
  // Volterra needs at least 32 steps.
  const auto config = normalize_config(ExperimentKind::simulate,
                                       parse_toml("[sampler]\nmethod = \"volterra\"\nsteps = 8\npaths = 4\n"));
  const auto dir = scratch("resolution");
  int code = 0;
  try {
    run_experiment(config, dir);
  } catch (...) {
    code = exit_code_for_current_exception();
  }
  CHECK(code == exit_numerical);
  fs::remove_all(dir);

  try {
    normalize_config(ExperimentKind::classify, parse_toml("[model]\nH = 1.5\n"));
  } catch (...) {
    code = exit_code_for_current_exception();
  }
  CHECK(code == exit_config);
}
