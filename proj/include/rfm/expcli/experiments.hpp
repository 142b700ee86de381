#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "rfm/asymptotics.hpp"
#include "rfm/dynamics.hpp"
#include "rfm/errors.hpp"
#include "rfm/expcli/config.hpp"
#include "rfm/expcli/csv.hpp"
#include "rfm/generalization.hpp"
#include "rfm/model.hpp"
#include "rfm/overlap_prob.hpp"
#include "rfm/rng.hpp"

#ifndef RFMLAB_VERSION
#define RFMLAB_VERSION "0.0.0"
#endif

namespace rfm::expcli {

/// Runs fn(0..n-1) on up to `jobs` threads and returns the results in index
/// order. The first exception by index is rethrown after all workers stop.
template <typename Fn>
auto parallel_map(std::size_t n, int jobs, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using T = decltype(fn(std::size_t{}));
  std::vector<std::optional<T>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(std::max(1, jobs), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  rfm::detail::require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need >= 2 points");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Record stride in SGD steps; 0 in the config means K / 10.
inline int effective_stride(const ExperimentConfig& cfg, int K) {
  return cfg.record_stride > 0 ? cfg.record_stride : std::max(1, K / 10);
}

/// c0 ~ Normal(0, 1/K), one stream per (replicate seed, N, K).
inline WeightVector initial_weights(std::uint64_t rep_seed, int N, int K) {
  auto engine = rng::make_engine(rep_seed, "c0", static_cast<std::uint64_t>(N), static_cast<std::uint64_t>(K));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(K)));
  WeightVector c(K);
  for (int i = 0; i < K; ++i) c[i] = normal(engine);
  return c;
}

inline std::vector<std::uint64_t> replicate_seeds(const ExperimentConfig& cfg) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(cfg.replicates));
  for (std::size_t r = 0; r < seeds.size(); ++r) seeds[r] = rng::replicate_seed(cfg.seed, r);
  return seeds;
}

inline Ridge config_ridge(const ExperimentConfig& cfg) { return Ridge{cfg.ridge}; }

/// Fixed-point error for one ensemble. The linearized route avoids K x K
/// matrices when no ridge is requested.
inline double fixed_point_error(const FeatureEnsemble& ens, Activation act, CorrelationMode mode,
                                Ridge ridge) {
  if (mode == CorrelationMode::Linearized && !ridge.active()) {
    return linearized_asymptotic_error(ens, act).eg_star;
  }
  return asymptotic_error(hidden_correlations(compute_overlaps(ens), act, mode), ridge);
}

/// Linearized curve value, or nullopt outside K >= N.
inline std::optional<double> analytic_curve(Activation act, int N, long K) {
  const double beta = static_cast<double>(K) / N;
  if (beta < 1.0) return std::nullopt;
  return act == Activation::Erf ? erf_plateau_curve(beta).eg_star : relu_plateau_curve(beta, K).eg_star;
}

inline std::string optional_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("NA");
}

// ---------------------------------------------------------------- trajectory

inline CsvTable cmd_trajectory(const ExperimentConfig& cfg) {
  CsvTable table{{"alpha", "eg_sgd", "eg_ode", "replicate", "N", "K", "activation"}, {}};
  const auto seeds = replicate_seeds(cfg);
  for (Activation act : cfg.activation) {
    for (int N : cfg.N) {
      for (int K : cfg.K) {
        const auto blocks = parallel_map(seeds.size(), cfg.jobs, [&](std::size_t r) {
          const NetworkShape shape{N, K};
          const FeatureEnsemble ens = sample_sphere_features(shape, seeds[r]);
          const WeightVector c0 = initial_weights(seeds[r], N, K);
          SgdConfig sc{shape, act, cfg.eta, cfg.alpha_max, effective_stride(cfg, K), seeds[r]};
          const Trajectory sgd = run_sgd(sc, ens, c0);
          const HiddenCorrelations hc =
              hidden_correlations(compute_overlaps(ens), act, CorrelationMode::Exact);
          const Trajectory ode = integrate_mean_path(hc, c0, cfg.eta, sgd.alphas);
          std::vector<std::vector<std::string>> rows;
          rows.reserve(sgd.size());
          for (std::size_t i = 0; i < sgd.size(); ++i) {
            rows.push_back({format_double(sgd.alphas[i]), format_double(sgd.eg[i]), format_double(ode.eg[i]),
                            format_int(r), format_int(N), format_int(K), std::string(to_string(act))});
          }
          return rows;
        });
        for (const auto& rows : blocks) {
          for (const auto& row : rows) table.add_row(row);
        }
      }
    }
  }
  return table;
}

// -------------------------------------------------------------------- scan-k

inline CsvTable cmd_scan_k(const ExperimentConfig& cfg) {
  CsvTable table{{"N", "K", "activation", "mode", "eg_mean", "eg_std", "eg_analytic", "replicates"}, {}};
  const auto seeds = replicate_seeds(cfg);
  for (Activation act : cfg.activation) {
    for (int N : cfg.N) {
      for (int K : cfg.K) {
        const auto values = parallel_map(seeds.size(), cfg.jobs, [&](std::size_t r) {
          const FeatureEnsemble ens = sample_sphere_features(NetworkShape{N, K}, seeds[r]);
          return fixed_point_error(ens, act, cfg.mode, config_ridge(cfg));
        });
        const Summary s = summarize(values);
        table.add_row({format_int(N), format_int(K), std::string(to_string(act)),
                       std::string(to_string(cfg.mode)), format_double(s.mean), format_double(s.std),
                       optional_cell(analytic_curve(act, N, K)), format_int(cfg.replicates)});
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------- scan-ratio

inline int ratio_width(int N, double beta) {
  return std::max(1, static_cast<int>(std::lround(beta * N)));
}

inline CsvTable cmd_scan_ratio(const ExperimentConfig& cfg) {
  CsvTable table{{"N", "K", "beta", "activation", "eg_mean", "eg_std", "plateau_ref"}, {}};
  const auto seeds = replicate_seeds(cfg);
  for (Activation act : cfg.activation) {
    for (double beta : cfg.beta) {
      for (int N : cfg.N) {
        const int K = ratio_width(N, beta);
        const auto values = parallel_map(seeds.size(), cfg.jobs, [&](std::size_t r) {
          const FeatureEnsemble ens = sample_sphere_features(NetworkShape{N, K}, seeds[r]);
          return fixed_point_error(ens, act, cfg.mode, config_ridge(cfg));
        });
        const Summary s = summarize(values);
        table.add_row({format_int(N), format_int(K), format_double(beta), std::string(to_string(act)),
                       format_double(s.mean), format_double(s.std),
                       optional_cell(analytic_curve(act, N, K))});
      }
    }
  }
  return table;
}

// ----------------------------------------------------------------- rmax-scan

/// Random unit vector orthogonal to B.
template <typename Engine>
Eigen::VectorXd orthogonal_direction(const Eigen::VectorXd& B, Engine& engine) {
  Eigen::VectorXd v = sample_input(static_cast<int>(B.size()), engine);
  for (int pass = 0; pass < 2; ++pass) v -= (v.dot(B) / B.squaredNorm()) * B;
  return v.normalized();
}

inline Eigen::VectorXd feature_with_overlap(const Eigen::VectorXd& B, double r, const Eigen::VectorXd& dir) {
  const double n = static_cast<double>(B.size());
  return r * B + std::sqrt(std::max(0.0, 1.0 - r * r)) * std::sqrt(n) * dir;
}

/// Ensemble with J_1 . B / N = r_max and every other feature at r_other. For a
/// fixed replicate seed, the directions orthogonal to B do not depend on r_max.
inline FeatureEnsemble rmax_ensemble(int N, int K, double r_max, double r_other, std::uint64_t rep_seed) {
  auto engine = rng::make_engine(rep_seed, "rmax-ensemble", static_cast<std::uint64_t>(N),
                                 static_cast<std::uint64_t>(K));
  FeatureEnsemble ens;
  ens.B = sample_sphere_vector(N, engine);
  ens.J.resize(K, N);
  ens.J.row(0) = feature_with_overlap(ens.B, r_max, orthogonal_direction(ens.B, engine)).transpose();
  for (int i = 1; i < K; ++i) {
    ens.J.row(i) = feature_with_overlap(ens.B, r_other, orthogonal_direction(ens.B, engine)).transpose();
  }
  return ens;
}

/// Mean of eg over the final `window` fraction of the recorded trajectory.
inline double tail_mean(const Trajectory& t, double window) {
  const double cutoff = t.alphas.back() * (1.0 - window);
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.alphas[i] >= cutoff) {
      sum += t.eg[i];
      ++count;
    }
  }
  return sum / count;
}

inline CsvTable cmd_rmax_scan(const ExperimentConfig& cfg) {
  CsvTable table{{"r_max", "eg_sgd", "eg_fixed_exact", "eg_fixed_linearized", "replicate"}, {}};
  const auto seeds = replicate_seeds(cfg);
  const Activation act = cfg.activation.front();
  const int N = cfg.N.front();
  const int K = cfg.K.front();
  for (double r_max : cfg.r_max) {
    const auto rows = parallel_map(seeds.size(), cfg.jobs, [&](std::size_t r) {
      const FeatureEnsemble ens = rmax_ensemble(N, K, r_max, cfg.r_other, seeds[r]);
      const OverlapState ov = compute_overlaps(ens);
      const double exact =
          asymptotic_error(hidden_correlations(ov, act, CorrelationMode::Exact), config_ridge(cfg));
      const double linear =
          asymptotic_error(hidden_correlations(ov, act, CorrelationMode::Linearized), config_ridge(cfg));
      SgdConfig sc{{N, K}, act, cfg.eta, cfg.alpha_max, effective_stride(cfg, K), seeds[r]};
      const double sgd = tail_mean(run_sgd(sc, ens, initial_weights(seeds[r], N, K)), cfg.window);
      return std::vector<std::string>{format_double(r_max), format_double(sgd), format_double(exact),
                                      format_double(linear), format_int(r)};
    });
    for (const auto& row : rows) table.add_row(row);
  }
  return table;
}

// ------------------------------------------------------------------- overlap

inline CsvTable cmd_overlap(const ExperimentConfig& cfg) {
  CsvTable table{{"N", "K", "r_star", "p_star", "cdf", "prob_max", "k_exact", "k_chernoff"}, {}};
  std::vector<std::optional<long>> widths;
  if (cfg.K.empty()) {
    widths.push_back(std::nullopt);
  } else {
    for (int K : cfg.K) widths.emplace_back(K);
  }
  for (int N : cfg.N) {
    rfm::detail::require(N >= 3, "overlap: N must be >= 3");
    for (double r_star : cfg.r_star) {
      for (double p_star : cfg.p_star) {
        for (const auto& K : widths) {
          const double cdf = overlap_cdf(r_star, N);
          const std::string prob = K ? format_double(prob_max_overlap(r_star, N, *K)) : "NA";
          std::string k_exact;
          try {
            k_exact = format_int(required_k_exact(r_star, N, p_star));
          } catch (const Unsatisfiable&) {
            // Past the exact integer range the ceiling is still meaningful as a double.
            const double k_real = required_k_real(r_star, N, p_star);
            k_exact = std::isfinite(k_real) ? format_double(std::ceil(k_real)) : "unsatisfiable";
          }
          const std::string k_chernoff = (N >= 4 && r_star > 0.0 && r_star < 1.0)
                                             ? format_double(required_k_chernoff(r_star, N, p_star))
                                             : "NA";
          table.add_row({format_int(N), K ? format_int(*K) : "NA", format_double(r_star), format_double(p_star),
                         format_double(cdf), prob, k_exact, k_chernoff});
        }
      }
    }
  }
  return table;
}

// ------------------------------------------------------------- variance-scan

/// Per-step relative noise of the loss decrease, eta^2 / K times the
/// along-mean probe. Its K dependence carries the 1/K law.
inline double relvar_from_probe(const ProbeEstimate& p, double eta, int K) {
  return eta * eta * p.along_mean / static_cast<double>(K);
}

inline std::vector<int> variance_inputs(const ExperimentConfig& cfg) {
  if (cfg.N.empty()) {
    std::vector<int> n;
    for (int K : cfg.K) n.push_back(std::max(2, K / 2));
    return n;
  }
  if (cfg.N.size() == 1) return std::vector<int>(cfg.K.size(), cfg.N.front());
  if (cfg.N.size() != cfg.K.size()) {
    throw ConfigError("N", "variance-scan needs one N, or one N per K");
  }
  return cfg.N;
}

inline CsvTable cmd_variance_scan(const ExperimentConfig& cfg) {
  CsvTable table{{"K", "relvar"}, {}};
  const auto seeds = replicate_seeds(cfg);
  const Activation act = cfg.activation.front();
  const auto inputs = variance_inputs(cfg);
  std::vector<double> ks, vs;
  for (std::size_t j = 0; j < cfg.K.size(); ++j) {
    const int K = cfg.K[j];
    const int N = inputs[j];
    const auto values = parallel_map(seeds.size(), cfg.jobs, [&](std::size_t r) -> std::optional<double> {
      const FeatureEnsemble ens = sample_sphere_features(NetworkShape{N, K}, seeds[r]);
      try {
        const ProbeEstimate p =
            relative_variance_probe(ens, act, initial_weights(seeds[r], N, K), cfg.n_samples, seeds[r]);
        return relvar_from_probe(p, cfg.eta, K);
      } catch (const DegenerateGradient&) {
        return std::nullopt;
      }
    });
    std::vector<double> ok;
    for (const auto& v : values) {
      if (v) ok.push_back(*v);
    }
    if (ok.empty()) {
      table.add_row({format_int(K), "degenerate"});
      continue;
    }
    const double mean = summarize(ok).mean;
    table.add_row({format_int(K), format_double(mean)});
    ks.push_back(K);
    vs.push_back(mean);
  }
  table.add_row({"slope", ks.size() >= 2 ? format_double(loglog_slope(ks, vs)) : "NA"});
  return table;
}

// ------------------------------------------------------------------- plateau

/// Default input dimension of the plateau runs, per activation.
inline int plateau_default_n(Activation act) { return act == Activation::Erf ? 500 : 200; }

inline CsvTable cmd_plateau(const ExperimentConfig& cfg) {
  CsvTable table{{"activation", "N", "K", "beta", "eg_curve", "eg_mean", "eg_std", "plateau_limit"}, {}};
  const auto seeds = replicate_seeds(cfg);
  for (Activation act : cfg.activation) {
    const std::vector<int> ns = cfg.N.empty() ? std::vector<int>{plateau_default_n(act)} : cfg.N;
    for (int N : ns) {
      for (double beta : cfg.beta) {
        const int K = ratio_width(N, beta);
        const auto values = parallel_map(seeds.size(), cfg.jobs, [&](std::size_t r) {
          const FeatureEnsemble ens = sample_sphere_features(NetworkShape{N, K}, seeds[r]);
          return fixed_point_error(ens, act, cfg.mode, config_ridge(cfg));
        });
        const Summary s = summarize(values);
        table.add_row({std::string(to_string(act)), format_int(N), format_int(K), format_double(beta),
                       optional_cell(analytic_curve(act, N, K)), format_double(s.mean), format_double(s.std),
                       format_double(plateau_limit(act))});
      }
    }
  }
  return table;
}

// ------------------------------------------------------------------ dispatch

inline std::string artifact_stem(Experiment e) {
  switch (e) {
    case Experiment::Trajectory: return "trajectory";
    case Experiment::ScanK: return "scan_k";
    case Experiment::ScanRatio: return "scan_ratio";
    case Experiment::RmaxScan: return "rmax";
    case Experiment::Overlap: return "overlap";
    case Experiment::VarianceScan: return "variance";
    case Experiment::Plateau: return "plateau";
  }
  return "run";
}

inline CsvTable run_table(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::Trajectory: return cmd_trajectory(cfg);
    case Experiment::ScanK: return cmd_scan_k(cfg);
    case Experiment::ScanRatio: return cmd_scan_ratio(cfg);
    case Experiment::RmaxScan: return cmd_rmax_scan(cfg);
    case Experiment::Overlap: return cmd_overlap(cfg);
    case Experiment::VarianceScan: return cmd_variance_scan(cfg);
    case Experiment::Plateau: return cmd_plateau(cfg);
  }
  throw std::logic_error("run_table: unknown experiment");
}

struct RunManifest {
  ExperimentConfig config;
  std::vector<std::uint64_t> replicate_seeds;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> artifacts;
  std::string version = RFMLAB_VERSION;
};

/// Config lines first, metadata as `#` comments, so the manifest itself is a
/// valid config file.
inline std::string to_manifest_text(const RunManifest& m) {
  std::string s = "# rfmlab run manifest\n";
  s += "# version = " + m.version + "\n";
  s += "# artifacts = ";
  for (std::size_t i = 0; i < m.artifacts.size(); ++i) s += (i ? ", " : "") + m.artifacts[i];
  s += "\n";
  for (std::size_t r = 0; r < m.replicate_seeds.size(); ++r) {
    s += "# replicate_seed." + std::to_string(r) + " = " + std::to_string(m.replicate_seeds[r]) + "\n";
  }
  s += "# wall_clock_seconds = " + format_double(m.wall_clock_seconds) + "\n";
  s += to_config_text(m.config);
  return s;
}

struct RunResult {
  std::filesystem::path csv_path;
  std::filesystem::path manifest_path;
  std::size_t rows = 0;
};

/// Runs the configured experiment and writes <stem>.csv and <stem>.manifest to cfg.out.
inline RunResult run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const CsvTable table = run_table(cfg);
  const auto stop = std::chrono::steady_clock::now();

  const std::filesystem::path dir(cfg.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

  const std::string stem = artifact_stem(cfg.experiment);
  RunResult res{dir / (stem + ".csv"), dir / (stem + ".manifest"), table.rows.size()};
  write_text_file(res.csv_path.string(), to_csv(table));

  RunManifest m;
  m.config = cfg;
  m.replicate_seeds = replicate_seeds(cfg);
  m.wall_clock_seconds = std::chrono::duration<double>(stop - start).count();
  m.artifacts = {res.csv_path.filename().string(), res.manifest_path.filename().string()};
  write_text_file(res.manifest_path.string(), to_manifest_text(m));
  return res;
}

}  // namespace rfm::expcli
