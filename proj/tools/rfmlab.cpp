// rfmlab: experiment runner for random-feature teacher-student networks.
//
//   rfmlab <experiment> --config <path> [--seed S] [--jobs J] [--out DIR] [--ridge EPS]
//                       [--set key=value ...]
//
// Exit status: 0 on success, 2 on usage or config errors, 1 on runtime errors.
// Errors are reported on stderr as a single JSON object.

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rfm/errors.hpp"
#include "rfm/expcli/config.hpp"
#include "rfm/expcli/experiments.hpp"

namespace {

using nlohmann::json;
using namespace rfm::expcli;

int report_error(int code, const std::string& kind, const std::string& message, const std::string& key = {}) {
  json err = {{"status", "error"}, {"kind", kind}, {"message", message}};
  if (!key.empty()) err["key"] = key;
  std::cerr << err.dump() << '\n';
  return code;
}

std::uint64_t environment_seed() {
  const char* env = std::getenv("RFMLAB_SEED");
  if (env == nullptr || *env == '\0') return 1;
  const std::string text(env);
  try {
    return detail::parse_number<std::uint64_t>("RFMLAB_SEED", text, "integer");
  } catch (const ConfigError&) {
    throw ConfigError("RFMLAB_SEED", "expected an unsigned integer, got '" + text + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-feature teacher-student experiment runner"};
  app.set_version_flag("--version", RFMLAB_VERSION);

  std::string experiment_name;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  std::optional<double> ridge;
  std::vector<std::string> overrides;

  app.add_option("experiment", experiment_name,
                 "trajectory | scan-k | scan-ratio | rmax-scan | overlap | variance-scan | plateau")
      ->required();
  app.add_option("--config", config_path, "Config file (key = value lines)")->required();
  app.add_option("--seed", seed, "Master seed; overrides the config and RFMLAB_SEED");
  app.add_option("--jobs", jobs, "Concurrent replicates")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory");
  app.add_option("--ridge", ridge, "Relative diagonal loading for singular correlations")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--set", overrides, "Extra key=value overrides");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(2, "usage", e.what());
  }

  ExperimentConfig cfg;
  try {
    const auto experiment = parse_experiment(experiment_name);
    if (!experiment) {
      throw ConfigError("experiment", "unknown experiment '" + experiment_name + "'");
    }
    RawConfig raw = read_config_file(config_path);
    for (const auto& item : overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError(item, "--set expects key=value");
      const RawConfig one = parse_config_text(item);
      for (const auto& [k, v] : one) raw[k] = v;
    }
    if (seed) raw["seed"] = std::to_string(*seed);
    if (jobs) raw["jobs"] = std::to_string(*jobs);
    if (out) raw["out"] = *out;
    if (ridge) raw["ridge"] = format_double(*ridge);
    cfg = resolve_config(raw, experiment, environment_seed());
  } catch (const ConfigError& e) {
    return report_error(2, "config", e.what(), e.key());
  } catch (const std::invalid_argument& e) {
    return report_error(2, "config", e.what());
  }

  try {
    const RunResult res = run_experiment(cfg);
    json ok = {{"status", "ok"},
               {"experiment", std::string(to_string(cfg.experiment))},
               {"csv", res.csv_path.string()},
               {"manifest", res.manifest_path.string()},
               {"rows", res.rows}};
    std::cout << ok.dump() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    return report_error(2, "config", e.what(), e.key());
  } catch (const rfm::SingularCorrelation& e) {
    return report_error(1, "singular_correlation", std::string(e.what()) + " (try --ridge)");
  } catch (const rfm::Error& e) {
    return report_error(1, "numeric", e.what());
  } catch (const IoError& e) {
    return report_error(1, "io", e.what());
  } catch (const std::exception& e) {
    return report_error(1, "runtime", e.what());
  }
}
