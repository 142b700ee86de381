#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rfm/expcli/csv.hpp"
#include "rfm/model.hpp"

// Flat `key = value` configuration. One entry per line, `#` starts a comment,
// lists are comma separated. Keys are case sensitive and unknown keys are
// rejected. Per-experiment defaults are documented in the README and applied
// by resolve_config.

namespace rfm::expcli {

enum class Experiment { Trajectory, ScanK, ScanRatio, RmaxScan, Overlap, VarianceScan, Plateau };

inline constexpr std::string_view to_string(Experiment e) noexcept {
  switch (e) {
    case Experiment::Trajectory: return "trajectory";
    case Experiment::ScanK: return "scan-k";
    case Experiment::ScanRatio: return "scan-ratio";
    case Experiment::RmaxScan: return "rmax-scan";
    case Experiment::Overlap: return "overlap";
    case Experiment::VarianceScan: return "variance-scan";
    case Experiment::Plateau: return "plateau";
  }
  return "";
}

inline std::optional<Experiment> parse_experiment(std::string_view name) {
  for (auto e : {Experiment::Trajectory, Experiment::ScanK, Experiment::ScanRatio,
                 Experiment::RmaxScan, Experiment::Overlap, Experiment::VarianceScan,
                 Experiment::Plateau}) {
    if (to_string(e) == name) return e;
  }
  return std::nullopt;
}

/// Usage-level failure: bad key, bad value, missing required key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key.empty() ? message : "config key '" + key + "': " + message),
        key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::Trajectory;
  std::vector<Activation> activation;
  std::vector<int> N;
  std::vector<int> K;
  std::vector<double> beta;
  std::vector<double> r_max;
  std::vector<double> r_star;
  std::vector<double> p_star;
  double eta = 0.1;
  double alpha_max = 50.0;
  int record_stride = 0;  // 0: K / 10 steps
  int replicates = 5;
  std::uint64_t seed = 1;
  CorrelationMode mode = CorrelationMode::Exact;
  double r_other = 0.05;
  double window = 0.25;
  long n_samples = 20000;
  double ridge = 0.0;
  int jobs = 1;
  std::string out = ".";

  bool operator==(const ExperimentConfig&) const = default;
};

using RawConfig = std::map<std::string, std::string>;

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "experiment", "activation", "N",      "K",        "beta",   "r_max",  "r_star",
      "p_star",     "eta",        "alpha_max", "record_stride", "replicates", "seed", "mode",
      "r_other",    "window",     "n_samples", "ridge",  "jobs",   "out"};
  return keys;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  if (trim(value).empty()) return items;
  std::string_view rest = value;
  while (true) {
    const auto comma = rest.find(',');
    items.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return items;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, const char* kind) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, value);
  if (text.empty() || res.ec != std::errc{} || res.ptr != last) {
    throw ConfigError(key, std::string("expected ") + kind + ", got '" + text + "'");
  }
  return value;
}

inline Activation parse_activation(const std::string& key, const std::string& text) {
  if (text == "erf") return Activation::Erf;
  if (text == "relu") return Activation::ReLU;
  throw ConfigError(key, "expected 'erf' or 'relu', got '" + text + "'");
}

inline CorrelationMode parse_mode(const std::string& key, const std::string& text) {
  if (text == "exact") return CorrelationMode::Exact;
  if (text == "linearized") return CorrelationMode::Linearized;
  throw ConfigError(key, "expected 'exact' or 'linearized', got '" + text + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& text, Parse parse) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) {
    out.push_back(parse(key, item));
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& items, auto format) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) s += ", ";
    s += format(items[i]);
  }
  return s;
}

}  // namespace detail

/// Parses `key = value` lines. Unknown and duplicate keys are errors.
inline RawConfig parse_config_text(std::string_view text) {
  RawConfig raw;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string content = detail::trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("", "line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(std::string_view(content).substr(0, eq));
    const std::string value = detail::trim(std::string_view(content).substr(eq + 1));
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(key, "unknown key");
    }
    if (!raw.emplace(key, value).second) {
      throw ConfigError(key, "duplicate key");
    }
  }
  return raw;
}

inline RawConfig read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("", "cannot read config file " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Builds a fully resolved config. `experiment` (from the command line) must
/// agree with an `experiment` key if the file has one. `default_seed` is used
/// when no `seed` key is present.
inline ExperimentConfig resolve_config(const RawConfig& raw, std::optional<Experiment> experiment,
                                       std::uint64_t default_seed = 1) {
  using namespace detail;
  auto get = [&](const char* key) -> const std::string* {
    const auto it = raw.find(key);
    return it == raw.end() ? nullptr : &it->second;
  };
  for (const auto& [key, value] : raw) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(key, "unknown key");
    }
  }

  ExperimentConfig cfg;
  if (const auto* v = get("experiment")) {
    const auto parsed = parse_experiment(*v);
    if (!parsed) throw ConfigError("experiment", "unknown experiment '" + *v + "'");
    if (experiment && *experiment != *parsed) {
      throw ConfigError("experiment", "file says '" + *v + "' but command is '" +
                                          std::string(to_string(*experiment)) + "'");
    }
    cfg.experiment = *parsed;
  } else if (experiment) {
    cfg.experiment = *experiment;
  } else {
    throw ConfigError("experiment", "missing required key");
  }

  const auto int_item = [](const std::string& k, const std::string& t) {
    return parse_number<int>(k, t, "integer");
  };
  const auto real_item = [](const std::string& k, const std::string& t) {
    return parse_number<double>(k, t, "number");
  };
  auto int_list = [&](const char* key, std::vector<int>& dst) {
    if (const auto* v = get(key)) dst = parse_list<int>(key, *v, int_item);
  };
  auto real_list = [&](const char* key, std::vector<double>& dst) {
    if (const auto* v = get(key)) dst = parse_list<double>(key, *v, real_item);
  };
  auto real = [&](const char* key, double& dst) {
    if (const auto* v = get(key)) dst = real_item(key, *v);
  };
  auto integer = [&](const char* key, auto& dst) {
    using T = std::remove_reference_t<decltype(dst)>;
    if (const auto* v = get(key)) dst = parse_number<T>(key, *v, "integer");
  };

  // Per-experiment defaults; explicit keys override below.
  switch (cfg.experiment) {
    case Experiment::Trajectory:
      cfg.replicates = 5;
      break;
    case Experiment::ScanK:
      cfg.mode = CorrelationMode::Linearized;
      cfg.replicates = 10;
      break;
    case Experiment::ScanRatio:
      cfg.replicates = 10;
      break;
    case Experiment::RmaxScan:
      cfg.N = {5};
      cfg.K = {7};
      cfg.r_max = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
      cfg.alpha_max = 2000.0;
      cfg.replicates = 10;
      break;
    case Experiment::Overlap:
      cfg.p_star = {0.99};
      cfg.replicates = 1;
      break;
    case Experiment::VarianceScan:
      cfg.replicates = 1;
      break;
    case Experiment::Plateau:
      cfg.mode = CorrelationMode::Linearized;
      cfg.replicates = 10;
      break;
  }
  cfg.activation = {Activation::Erf};
  cfg.seed = default_seed;

  if (const auto* v = get("activation")) {
    cfg.activation = parse_list<Activation>("activation", *v, parse_activation);
  }
  int_list("N", cfg.N);
  int_list("K", cfg.K);
  real_list("beta", cfg.beta);
  real_list("r_max", cfg.r_max);
  real_list("r_star", cfg.r_star);
  real_list("p_star", cfg.p_star);
  real("eta", cfg.eta);
  real("alpha_max", cfg.alpha_max);
  integer("record_stride", cfg.record_stride);
  integer("replicates", cfg.replicates);
  integer("seed", cfg.seed);
  if (const auto* v = get("mode")) cfg.mode = parse_mode("mode", *v);
  real("r_other", cfg.r_other);
  real("window", cfg.window);
  integer("n_samples", cfg.n_samples);
  real("ridge", cfg.ridge);
  integer("jobs", cfg.jobs);
  if (const auto* v = get("out")) cfg.out = *v;

  auto need = [&](const char* key, bool present) {
    if (!present) throw ConfigError(key, "missing required key for experiment '" +
                                         std::string(to_string(cfg.experiment)) + "'");
  };
  switch (cfg.experiment) {
    case Experiment::Trajectory:
    case Experiment::ScanK:
      need("N", !cfg.N.empty());
      need("K", !cfg.K.empty());
      break;
    case Experiment::ScanRatio:
      need("N", !cfg.N.empty());
      need("beta", !cfg.beta.empty());
      break;
    case Experiment::RmaxScan:
      need("r_max", !cfg.r_max.empty());
      break;
    case Experiment::Overlap:
      need("N", !cfg.N.empty());
      need("r_star", !cfg.r_star.empty());
      need("p_star", !cfg.p_star.empty());
      break;
    case Experiment::VarianceScan:
      need("K", !cfg.K.empty());
      break;
    case Experiment::Plateau:
      need("beta", !cfg.beta.empty());
      break;
  }

  auto check = [](const char* key, bool ok, const char* what) {
    if (!ok) throw ConfigError(key, what);
  };
  check("activation", !cfg.activation.empty(), "list must not be empty");
  check("replicates", cfg.replicates >= 1, "must be >= 1");
  check("jobs", cfg.jobs >= 1, "must be >= 1");
  check("eta", cfg.eta >= 0.0, "must be >= 0");
  check("alpha_max", cfg.alpha_max > 0.0, "must be > 0");
  check("record_stride", cfg.record_stride >= 0, "must be >= 0");
  check("window", cfg.window > 0.0 && cfg.window <= 1.0, "must lie in (0, 1]");
  check("ridge", cfg.ridge >= 0.0, "must be >= 0");
  check("n_samples", cfg.n_samples >= 1000, "must be >= 1000");
  check("r_other", cfg.r_other >= 0.0 && cfg.r_other <= 1.0, "must lie in [0, 1]");
  check("N", std::all_of(cfg.N.begin(), cfg.N.end(), [](int n) { return n >= 2; }), "entries must be >= 2");
  check("K", std::all_of(cfg.K.begin(), cfg.K.end(), [](int k) { return k >= 1; }), "entries must be >= 1");
  check("beta", std::all_of(cfg.beta.begin(), cfg.beta.end(), [](double b) { return b > 0.0; }),
        "entries must be > 0");
  check("r_max", std::all_of(cfg.r_max.begin(), cfg.r_max.end(), [](double r) { return r >= 0.0 && r <= 1.0; }),
        "entries must lie in [0, 1]");
  check("r_star", std::all_of(cfg.r_star.begin(), cfg.r_star.end(), [](double r) { return r >= -1.0 && r <= 1.0; }),
        "entries must lie in [-1, 1]");
  check("p_star", std::all_of(cfg.p_star.begin(), cfg.p_star.end(), [](double p) { return p > 0.0 && p < 1.0; }),
        "entries must lie in (0, 1)");
  return cfg;
}

inline ExperimentConfig parse_config(std::string_view text, std::optional<Experiment> experiment = {},
                                     std::uint64_t default_seed = 1) {
  return resolve_config(parse_config_text(text), experiment, default_seed);
}

/// Serializes every resolved key; resolve_config(parse_config_text(s)) gives the
/// same config back.
inline std::string to_config_text(const ExperimentConfig& cfg) {
  using detail::join;
  std::ostringstream os;
  auto real = [](double x) { return format_double(x); };
  auto integer = [](auto x) { return std::to_string(x); };
  auto act = [](Activation a) { return std::string(to_string(a)); };
  auto list = [&](const char* key, const auto& items, auto fmt) {
    if (!items.empty()) os << key << " = " << join(items, fmt) << '\n';
  };
  os << "experiment = " << to_string(cfg.experiment) << '\n';
  list("activation", cfg.activation, act);
  list("N", cfg.N, integer);
  list("K", cfg.K, integer);
  list("beta", cfg.beta, real);
  list("r_max", cfg.r_max, real);
  list("r_star", cfg.r_star, real);
  list("p_star", cfg.p_star, real);
  os << "eta = " << real(cfg.eta) << '\n';
  os << "alpha_max = " << real(cfg.alpha_max) << '\n';
  os << "record_stride = " << cfg.record_stride << '\n';
  os << "replicates = " << cfg.replicates << '\n';
  os << "seed = " << cfg.seed << '\n';
  os << "mode = " << to_string(cfg.mode) << '\n';
  os << "r_other = " << real(cfg.r_other) << '\n';
  os << "window = " << real(cfg.window) << '\n';
  os << "n_samples = " << cfg.n_samples << '\n';
  os << "ridge = " << real(cfg.ridge) << '\n';
  os << "jobs = " << cfg.jobs << '\n';
  os << "out = " << cfg.out << '\n';
  return os.str();
}

}  // namespace rfm::expcli
