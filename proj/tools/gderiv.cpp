// gderiv: runs configured experiments and the acceptance suite.

#include <CLI11.hpp>

#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gderiv/experiments.hpp"

namespace {

struct Job {
  std::string config_path;
  std::filesystem::path out;
};

struct Outcome {
  int code = gderiv::exit_ok;
  std::string message;
};

Outcome run_one(gderiv::ExperimentKind kind, const Job& job, const gderiv::ConfigOverrides& overrides) {
  const std::string label = std::string(gderiv::to_string(kind)) + (job.config_path.empty() ? "" : " (" + job.config_path + ")");
  try {
    const gderiv::Json raw = job.config_path.empty() ? gderiv::Json::object() : gderiv::load_config_file(job.config_path);
    const auto config = gderiv::normalize_config(kind, raw, overrides);
    const auto bundle = gderiv::run_experiment(config, job.out);
    Outcome out{bundle.passed ? gderiv::exit_ok : gderiv::exit_acceptance,
                label + ": " + bundle.summary + " -> " + job.out.string()};
    return out;
  } catch (...) {
    const int code = gderiv::exit_code_for_current_exception();
    try {
      throw;
    } catch (const std::exception& e) {
      return {code, label + ": " + e.what()};
    } catch (...) {
      return {code, label + ": unknown error"};
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic derivatives of Gaussian processes: exact engine, samplers and experiments"};
  app.require_subcommand(1);

  std::vector<std::string> configs;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> format;
  bool parallel = false;

  for (auto kind : gderiv::all_kinds()) {
    auto* sub = app.add_subcommand(gderiv::to_string(kind), std::string("run the ") + gderiv::to_string(kind) + " experiment");
    sub->add_option("--config", configs, "TOML or JSON config file (repeatable)")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "base seed");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));
    sub->add_option("--format", format, "path output format")->check(CLI::IsMember({"csv", "binary"}));
    sub->add_flag("--parallel", parallel, "run several configs concurrently");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : gderiv::exit_config;
  }

  const auto* sub = app.get_subcommands().front();
  const auto kind = gderiv::parse_kind(sub->get_name());
  const gderiv::ConfigOverrides overrides{seed, threads, format};
  const std::filesystem::path base = out_dir.empty() ? std::filesystem::path("gderiv-out") / gderiv::to_string(kind) : std::filesystem::path(out_dir);

  std::vector<Job> jobs;
  if (configs.empty()) {
    jobs.push_back({"", base});
  } else if (configs.size() == 1) {
    jobs.push_back({configs[0], base});
  } else {
    for (const auto& c : configs) jobs.push_back({c, base / std::filesystem::path(c).stem()});
  }

  std::vector<Outcome> outcomes;
  if (parallel && jobs.size() > 1) {
    std::vector<std::future<Outcome>> futures;
    for (const auto& job : jobs) futures.push_back(std::async(std::launch::async, run_one, kind, job, overrides));
    for (auto& f : futures) outcomes.push_back(f.get());
  } else {
    for (const auto& job : jobs) outcomes.push_back(run_one(kind, job, overrides));
  }

  int code = gderiv::exit_ok;
  for (const auto& o : outcomes) {
    (o.code == gderiv::exit_ok ? std::cout : std::cerr) << o.message << '\n';
    if (o.code != gderiv::exit_ok && (code == gderiv::exit_ok || o.code < code)) code = o.code;
  }
  return code;
}
