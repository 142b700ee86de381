#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "rfm/errors.hpp"
#include "rfm/generalization.hpp"
#include "rfm/model.hpp"
#include "rfm/rng.hpp"

namespace rfm {

/// One-pass SGD run. `eta` is the global learning rate; each step uses eta / K.
/// Time is alpha = mu / K, so alpha_max * K fresh inputs are drawn.
struct SgdConfig {
  NetworkShape shape;
  Activation activation = Activation::Erf;
  double eta = 0.1;
  double alpha_max = 50.0;
  int record_stride = 1;
  std::uint64_t seed = 0;

  void validate() const {
    shape.validate();
    detail::require(eta >= 0.0 && std::isfinite(eta), "SgdConfig: eta must be finite and >= 0");
    detail::require(alpha_max > 0.0, "SgdConfig: alpha_max must be > 0");
    detail::require(record_stride >= 1, "SgdConfig: record_stride must be >= 1");
  }
};

struct Trajectory {
  std::vector<double> alphas;
  std::vector<double> eg;
  std::vector<WeightVector> weights;  // empty unless requested
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return alphas.size(); }
};

/// c_i <- c_i + (eta/K) (zeta - sigma) g(x_i).
template <typename Derived>
WeightVector sgd_step(const WeightVector& c, const FeatureEnsemble& ens,
                      const Eigen::MatrixBase<Derived>& xi, Activation act, double eta) {
  detail::require(c.size() == ens.K(), "sgd_step: weight dimension mismatch");
  const Eigen::VectorXd g = activate(act, student_fields(ens, xi));
  const double residual = forward_teacher(ens, xi, act) - c.dot(g);
  return c + (eta / static_cast<double>(ens.K())) * residual * g;
}

inline Trajectory run_sgd(const SgdConfig& cfg, const FeatureEnsemble& ens, const WeightVector& c0,
                          bool keep_weights = false) {
  cfg.validate();
  detail::require(ens.N() == cfg.shape.N && ens.K() == cfg.shape.K,
                  "run_sgd: ensemble does not match configured shape");
  detail::require(c0.size() == ens.K(), "run_sgd: c0 dimension mismatch");

  const int n = ens.N();
  const int k = ens.K();
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  const double step = cfg.eta / static_cast<double>(k);
  const auto steps = static_cast<std::int64_t>(std::ceil(cfg.alpha_max * k - 1e-9));
  const HiddenCorrelations hc =
      hidden_correlations(compute_overlaps(ens), cfg.activation, CorrelationMode::Exact);

  Trajectory traj;
  auto record = [&](std::int64_t mu, const WeightVector& c) {
    traj.alphas.push_back(static_cast<double>(mu) / k);
    traj.eg.push_back(gen_error(c, hc).eg);
    if (keep_weights) {
      traj.weights.push_back(c);
    }
  };

  auto engine = rng::make_engine(cfg.seed, "sgd-inputs", static_cast<std::uint64_t>(n),
                                 static_cast<std::uint64_t>(k));
  std::normal_distribution<double> normal;
  WeightVector c = c0;
  Eigen::VectorXd xi(n);
  Eigen::VectorXd g(k);
  record(0, c);
  for (std::int64_t mu = 1; mu <= steps; ++mu) {
    for (int a = 0; a < n; ++a) {
      xi[a] = normal(engine);
    }
    g.noalias() = ens.J * xi;
    g *= inv_sqrt_n;
    for (int i = 0; i < k; ++i) {
      g[i] = activate(cfg.activation, g[i]);
    }
    const double zeta = activate(cfg.activation, ens.B.dot(xi) * inv_sqrt_n);
    const double residual = zeta - c.dot(g);
    c.noalias() += (step * residual) * g;
    if (mu % cfg.record_stride == 0 || mu == steps) {
      record(mu, c);
    }
  }
  return traj;
}

namespace detail {

inline void require_time_grid(const std::vector<double>& alphas) {
  detail::require(!alphas.empty(), "mean path: empty time grid");
  detail::require(alphas.front() >= 0.0, "mean path: time grid must start at alpha >= 0");
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    detail::require(alphas[i] > alphas[i - 1], "mean path: time grid must be increasing");
  }
}

}  // namespace detail

/// Exact solution of dc/dalpha = -eta (Qtilde c - Rtilde) on the given grid,
/// c(alpha) = c0 - V diag((1 - exp(-eta lambda alpha)) / lambda) V^T (Qtilde c0 - Rtilde),
/// which reduces to c* + exp(-eta Qtilde alpha)(c0 - c*) for invertible Qtilde and
/// stays finite on its null space.
inline Trajectory integrate_mean_path(const HiddenCorrelations& hc, const WeightVector& c0,
                                      double eta, const std::vector<double>& alphas,
                                      bool keep_weights = false) {
  detail::require(c0.size() == hc.K(), "integrate_mean_path: c0 dimension mismatch");
  detail::require_time_grid(alphas);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hc.Qtilde);
  if (eig.info() != Eigen::Success) {
    throw NumericError("integrate_mean_path: eigendecomposition failed");
  }
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const Eigen::MatrixXd& V = eig.eigenvectors();
  const double lambda_max = std::max(std::abs(lambda.minCoeff()), std::abs(lambda.maxCoeff()));

  Trajectory traj;
  if (lambda.minCoeff() < -1e-10 * std::max(1.0, lambda_max)) {
    traj.warnings.emplace_back("correlation matrix has negative eigenvalues; mean path may diverge");
  }

  const Eigen::VectorXd y0 = V.transpose() * c0;
  const Eigen::VectorXd r = V.transpose() * hc.Rtilde;
  const Eigen::VectorXd z = lambda.cwiseProduct(y0) - r;  // V^T (Qtilde c0 - Rtilde)
  const double zero_tol = 1e-14 * std::max(1.0, lambda_max);

  Eigen::VectorXd y(y0.size());
  for (double alpha : alphas) {
    for (Eigen::Index k = 0; k < y.size(); ++k) {
      const double rate = eta * lambda[k];
      const double phi =
          std::abs(lambda[k]) <= zero_tol ? eta * alpha : -std::expm1(-rate * alpha) / lambda[k];
      y[k] = y0[k] - phi * z[k];
    }
    traj.alphas.push_back(alpha);
    traj.eg.push_back(0.5 * hc.teacher_second_moment + 0.5 * lambda.dot(y.cwiseAbs2()) - y.dot(r));
    if (keep_weights) {
      traj.weights.push_back(V * y);
    }
  }
  return traj;
}

/// RK4 stability limit of the real, negative axis.
inline constexpr double kRk4StabilityBound = 2.785;

/// Fixed-step RK4 for the same ODE. `h <= 0` selects min(1e-2, 0.1 / (eta lambda_max)).
inline Trajectory integrate_mean_path_rk4(const HiddenCorrelations& hc, const WeightVector& c0,
                                          double eta, const std::vector<double>& alphas,
                                          double h = 0.0, bool keep_weights = false) {
  detail::require(c0.size() == hc.K(), "integrate_mean_path_rk4: c0 dimension mismatch");
  detail::require_time_grid(alphas);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hc.Qtilde, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw NumericError("integrate_mean_path_rk4: eigenvalue computation failed");
  }
  const double lambda_max = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (h <= 0.0) {
    h = eta * lambda_max > 0.0 ? std::min(1e-2, 0.1 / (eta * lambda_max)) : 1e-2;
  }

  Trajectory traj;
  if (eta * lambda_max * h > kRk4StabilityBound) {
    traj.warnings.emplace_back("RK4 step exceeds the stability bound eta * lambda_max * h <= 2.785");
  }

  auto rhs = [&](const WeightVector& c) -> WeightVector { return -eta * (hc.Qtilde * c - hc.Rtilde); };
  auto record = [&](double alpha, const WeightVector& c) {
    traj.alphas.push_back(alpha);
    traj.eg.push_back(gen_error(c, hc).eg);
    if (keep_weights) {
      traj.weights.push_back(c);
    }
  };

  WeightVector c = c0;
  double t = 0.0;
  for (double target : alphas) {
    const double span = target - t;
    if (span > 0.0) {
      const auto n = static_cast<long>(std::ceil(span / h - 1e-12));
      const double dt = span / static_cast<double>(n);
      for (long s = 0; s < n; ++s) {
        const WeightVector k1 = rhs(c);
        const WeightVector k2 = rhs(c + 0.5 * dt * k1);
        const WeightVector k3 = rhs(c + 0.5 * dt * k2);
        const WeightVector k4 = rhs(c + dt * k3);
        c += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      t = target;
    }
    record(target, c);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Relative variance of the stochastic gradient.

/// Raw fluctuation statistics of the per-sample gradient around the mean
/// gradient d = Qtilde c - Rtilde, each with its Monte Carlo standard error.
///   componentwise = (<|grad eps|^2> - |d|^2) / |d|^2
///   along_mean    = (<(grad eps . d)^2> - |d|^4) / |d|^4
/// `componentwise` is the total gradient noise relative to the drift. It grows
/// with K / N because every hidden unit contributes O(1) noise. `along_mean`
/// is the relative noise in the loss decrease per step; it stays of order one.
struct ProbeEstimate {
  double componentwise = 0.0;
  double componentwise_se = 0.0;
  double along_mean = 0.0;
  double along_mean_se = 0.0;
  double mean_gradient_norm2 = 0.0;
  long n_samples = 0;
};

namespace detail {

class ProbeAccumulator {
 public:
  explicit ProbeAccumulator(double mean_norm2) : d2_(mean_norm2) {}

  void add(double grad_norm2, double projection) {
    ++n_;
    push(grad_norm2, mean_a_, m2_a_);
    push(projection * projection, mean_b_, m2_b_);
  }

  ProbeEstimate finish() const {
    ProbeEstimate p;
    const double n = static_cast<double>(n_);
    const double d4 = d2_ * d2_;
    p.componentwise = (mean_a_ - d2_) / d2_;
    p.componentwise_se = std::sqrt(m2_a_ / (n - 1.0) / n) / d2_;
    p.along_mean = (mean_b_ - d4) / d4;
    p.along_mean_se = std::sqrt(m2_b_ / (n - 1.0) / n) / d4;
    p.mean_gradient_norm2 = d2_;
    p.n_samples = n_;
    return p;
  }

 private:
  void push(double x, double& mean, double& m2) const {
    const double delta = x - mean;
    mean += delta / static_cast<double>(n_);
    m2 += delta * (x - mean);
  }

  double d2_;
  long n_ = 0;
  double mean_a_ = 0.0, m2_a_ = 0.0;
  double mean_b_ = 0.0, m2_b_ = 0.0;
};

inline void require_probe_inputs(double mean_norm2, long n_samples) {
  detail::require(n_samples >= 1000, "relative_variance_probe: n_samples must be >= 1000");
  if (!(std::sqrt(mean_norm2) >= 1e-10)) {
    throw DegenerateGradient("relative variance is undefined at the fixed point (|grad eps_g| < 1e-10)");
  }
}

}  // namespace detail

/// Probe driven by an arbitrary source of per-sample gradients. `next_gradient()`
/// must return a K-vector. Used as a test hook and by the ensemble probe below.
template <typename GradientSource>
ProbeEstimate relative_variance_from(const Eigen::VectorXd& mean_gradient,
                                     GradientSource&& next_gradient, long n_samples) {
  const double d2 = mean_gradient.squaredNorm();
  detail::require_probe_inputs(d2, n_samples);
  detail::ProbeAccumulator acc(d2);
  for (long s = 0; s < n_samples; ++s) {
    const Eigen::VectorXd grad = next_gradient();
    detail::require(grad.size() == mean_gradient.size(), "relative_variance_from: gradient size mismatch");
    acc.add(grad.squaredNorm(), grad.dot(mean_gradient));
  }
  return acc.finish();
}

/// Gradient of eps = 1/2 (zeta - sigma)^2 is -(zeta - sigma) g(x); the mean
/// gradient is the analytic Qtilde c - Rtilde from exact correlations.
inline ProbeEstimate relative_variance_probe(const FeatureEnsemble& ens, Activation act,
                                             const WeightVector& c, long n_samples,
                                             std::uint64_t seed) {
  detail::require(c.size() == ens.K(), "relative_variance_probe: weight dimension mismatch");
  const HiddenCorrelations hc =
      hidden_correlations(compute_overlaps(ens), act, CorrelationMode::Exact);
  const Eigen::VectorXd d = hc.Qtilde * c - hc.Rtilde;
  const double d2 = d.squaredNorm();
  detail::require_probe_inputs(d2, n_samples);

  const int n = ens.N();
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  auto engine = rng::make_engine(seed, "probe-inputs", static_cast<std::uint64_t>(n),
                                 static_cast<std::uint64_t>(ens.K()));
  std::normal_distribution<double> normal;
  detail::ProbeAccumulator acc(d2);

  constexpr long kBlock = 256;
  Eigen::MatrixXd X(n, kBlock);
  for (long done = 0; done < n_samples; done += kBlock) {
    const long b = std::min(kBlock, n_samples - done);
    for (long s = 0; s < b; ++s) {
      for (int a = 0; a < n; ++a) {
        X(a, s) = normal(engine);
      }
    }
    const auto Xb = X.leftCols(b);
    Eigen::MatrixXd G = (ens.J * Xb) * inv_sqrt_n;
    G = G.unaryExpr([act](double x) { return activate(act, x); });
    const Eigen::RowVectorXd y = (ens.B.transpose() * Xb) * inv_sqrt_n;
    const Eigen::RowVectorXd sigma = c.transpose() * G;
    const Eigen::RowVectorXd gd = d.transpose() * G;
    for (long s = 0; s < b; ++s) {
      const double residual = activate(act, y[s]) - sigma[s];
      acc.add(residual * residual * G.col(s).squaredNorm(), -residual * gd[s]);
    }
  }
  return acc.finish();
}

}  // namespace rfm
