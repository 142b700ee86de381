#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

#include <Eigen/Dense>

#include "rfm/errors.hpp"
#include "rfm/rng.hpp"

namespace rfm {

enum class Activation { Erf, ReLU };
enum class CorrelationMode { Exact, Linearized };

constexpr std::string_view to_string(Activation act) noexcept {
  return act == Activation::Erf ? "erf" : "relu";
}
constexpr std::string_view to_string(CorrelationMode mode) noexcept {
  return mode == CorrelationMode::Exact ? "exact" : "linearized";
}

/// Input dimension N, student width K, teacher width M (always 1).
struct NetworkShape {
  int N = 2;
  int K = 1;
  static constexpr int M = 1;

  void validate() const {
    detail::require(N >= 2, "NetworkShape: N must be >= 2");
    detail::require(K >= 1, "NetworkShape: K must be >= 1");
  }
};

/// Frozen first layer: student feature vectors as rows of J (K x N) and the
/// teacher vector B (N), all on the sphere of radius sqrt(N).
struct FeatureEnsemble {
  Eigen::MatrixXd J;
  Eigen::VectorXd B;

  int N() const noexcept { return static_cast<int>(B.size()); }
  int K() const noexcept { return static_cast<int>(J.rows()); }
};

/// R_i = J_i.B/N, Q_ij = J_i.J_j/N, T = B.B/N = 1.
struct OverlapState {
  Eigen::VectorXd R;
  Eigen::MatrixXd Q;
  double T = 1.0;

  int K() const noexcept { return static_cast<int>(R.size()); }
};

/// Hidden-unit correlations Qtilde_ij = <g(x_i) g(x_j)>, Rtilde_i = <g(x_i) g(y)>
/// and the teacher second moment <zeta^2>.
///
/// Linearized mode keeps the first order in the off-diagonal overlaps:
///   Erf:  Qtilde_ii = 1/3, Qtilde_ij = Q_ij / pi,          Rtilde_i = R_i / pi
///   ReLU: Qtilde_ii = 1/2, Qtilde_ij = Q_ij / 4 + 1/(2 pi), Rtilde_i = R_i / 4 + 1/(2 pi)
/// For Erf this is Qtilde = S / pi with S_ii = pi/3, S_ij = Q_ij, so the
/// generic error formula reproduces eps* = (pi/3 - R^T S^-1 R) / (2 pi).
struct HiddenCorrelations {
  Eigen::MatrixXd Qtilde;
  Eigen::VectorXd Rtilde;
  double teacher_second_moment = 0.0;
  Activation activation = Activation::Erf;
  CorrelationMode mode = CorrelationMode::Exact;

  int K() const noexcept { return static_cast<int>(Rtilde.size()); }
};

inline double activate(Activation act, double x) noexcept {
  if (act == Activation::Erf) {
    return std::erf(x * std::numbers::sqrt2 / 2.0);
  }
  return x > 0.0 ? x : 0.0;
}

/// <g(y)^2> for a standard normal y: 1/3 for erf(x/sqrt2), 1/2 for ReLU.
constexpr double teacher_second_moment(Activation act) noexcept {
  return act == Activation::Erf ? 1.0 / 3.0 : 0.5;
}

template <typename Derived>
Eigen::VectorXd activate(Activation act, const Eigen::MatrixBase<Derived>& x) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out[i] = activate(act, x[i]);
  }
  return out;
}

template <typename Engine>
Eigen::VectorXd sample_input(int N, Engine& engine) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd xi(N);
  for (int a = 0; a < N; ++a) {
    xi[a] = normal(engine);
  }
  return xi;
}

/// Draws a Gaussian vector and rescales it onto the sphere of radius sqrt(N).
template <typename Engine>
Eigen::VectorXd sample_sphere_vector(int N, Engine& engine) {
  Eigen::VectorXd v = sample_input(N, engine);
  v *= std::sqrt(static_cast<double>(N)) / v.norm();
  return v;
}

template <typename Engine>
FeatureEnsemble sample_sphere_features(const NetworkShape& shape, Engine& engine) {
  shape.validate();
  FeatureEnsemble ens;
  ens.B = sample_sphere_vector(shape.N, engine);
  ens.J.resize(shape.K, shape.N);
  for (int i = 0; i < shape.K; ++i) {
    ens.J.row(i) = sample_sphere_vector(shape.N, engine).transpose();
  }
  return ens;
}

inline FeatureEnsemble sample_sphere_features(const NetworkShape& shape, std::uint64_t seed) {
  auto engine = rng::make_engine(seed, "ensemble", static_cast<std::uint64_t>(shape.N),
                                 static_cast<std::uint64_t>(shape.K));
  return sample_sphere_features(shape, engine);
}

inline OverlapState compute_overlaps(const FeatureEnsemble& ens) {
  const double n = ens.N();
  OverlapState ov;
  ov.R = ens.J * ens.B / n;
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(ens.K(), ens.K());
  lower.selfadjointView<Eigen::Lower>().rankUpdate(ens.J, 1.0 / n);
  ov.Q = lower.selfadjointView<Eigen::Lower>();
  ov.T = ens.B.squaredNorm() / n;
  return ov;
}

/// Student local fields x_i = J_i . xi / sqrt(N).
template <typename Derived>
Eigen::VectorXd student_fields(const FeatureEnsemble& ens, const Eigen::MatrixBase<Derived>& xi) {
  detail::require(xi.size() == ens.N(), "student_fields: input dimension mismatch");
  return ens.J * xi / std::sqrt(static_cast<double>(ens.N()));
}

template <typename Derived>
double teacher_field(const FeatureEnsemble& ens, const Eigen::MatrixBase<Derived>& xi) {
  detail::require(xi.size() == ens.N(), "teacher_field: input dimension mismatch");
  return ens.B.dot(xi) / std::sqrt(static_cast<double>(ens.N()));
}

template <typename Derived>
double forward_student(const Eigen::VectorXd& c, const FeatureEnsemble& ens,
                       const Eigen::MatrixBase<Derived>& xi, Activation act) {
  detail::require(c.size() == ens.K(), "forward_student: weight dimension mismatch");
  return c.dot(activate(act, student_fields(ens, xi)));
}

template <typename Derived>
double forward_teacher(const FeatureEnsemble& ens, const Eigen::MatrixBase<Derived>& xi,
                       Activation act) {
  return activate(act, teacher_field(ens, xi));
}

namespace detail {

inline constexpr double kArcsinSlack = 1e-12;

inline double clamped_unit(double u) {
  if (std::abs(u) > 1.0 + kArcsinSlack || std::isnan(u)) {
    throw DomainError("i2: correlation argument outside [-1, 1]");
  }
  return std::clamp(u, -1.0, 1.0);
}

}  // namespace detail

/// <g(u) g(v)> for a centred Gaussian pair with covariance [[c11, c12], [c12, c22]].
inline double i2(Activation act, double c11, double c12, double c22) {
  if (c11 < 0.0 || c22 < 0.0) {
    throw DomainError("i2: negative variance");
  }
  const double scale = std::sqrt(c11 * c22);
  if (std::abs(c12) - scale > detail::kArcsinSlack * std::max(1.0, scale)) {
    throw DomainError("i2: covariance is not positive semidefinite");
  }
  if (act == Activation::Erf) {
    const double u = c12 / (std::sqrt(1.0 + c11) * std::sqrt(1.0 + c22));
    return (2.0 / std::numbers::pi) * std::asin(detail::clamped_unit(u));
  }
  if (scale == 0.0) {
    return 0.0;
  }
  const double det = std::max(0.0, c11 * c22 - c12 * c12);
  const double rho = detail::clamped_unit(c12 / scale);
  return c12 / 4.0 + (std::sqrt(det) + c12 * std::asin(rho)) / (2.0 * std::numbers::pi);
}

inline HiddenCorrelations hidden_correlations(const OverlapState& ov, Activation act,
                                              CorrelationMode mode) {
  const int k = ov.K();
  detail::require(ov.Q.rows() == k && ov.Q.cols() == k,
                  "hidden_correlations: Q and R dimensions differ");
  HiddenCorrelations hc;
  hc.activation = act;
  hc.mode = mode;
  hc.teacher_second_moment = teacher_second_moment(act);
  hc.Qtilde.resize(k, k);
  hc.Rtilde.resize(k);

  constexpr double inv_pi = std::numbers::inv_pi;
  constexpr double inv_2pi = 0.5 * std::numbers::inv_pi;

  if (mode == CorrelationMode::Exact) {
    for (int j = 0; j < k; ++j) {
      for (int i = j; i < k; ++i) {
        const double v = i2(act, ov.Q(i, i), ov.Q(i, j), ov.Q(j, j));
        hc.Qtilde(i, j) = v;
        hc.Qtilde(j, i) = v;
      }
      hc.Rtilde[j] = i2(act, ov.Q(j, j), ov.R[j], ov.T);
    }
    return hc;
  }

  if (act == Activation::Erf) {
    hc.Qtilde = ov.Q * inv_pi;
    hc.Qtilde.diagonal().setConstant(1.0 / 3.0);
    hc.Rtilde = ov.R * inv_pi;
  } else {
    hc.Qtilde = ((ov.Q * 0.25).array() + inv_2pi).matrix();
    hc.Qtilde.diagonal().setConstant(0.5);
    hc.Rtilde = ((ov.R * 0.25).array() + inv_2pi).matrix();
  }
  return hc;
}

/// Feature with prescribed teacher overlap: r B + sqrt(1 - r^2) sqrt(N) v, where
/// v is a random unit vector orthogonal to B.
template <typename Engine>
Eigen::VectorXd plant_aligned_feature(const Eigen::VectorXd& B, double r_target, Engine& engine) {
  detail::require(r_target >= 0.0 && r_target <= 1.0,
                  "plant_aligned_feature: r_target must lie in [0, 1]");
  const int n = static_cast<int>(B.size());
  detail::require(n >= 2, "plant_aligned_feature: N must be >= 2");
  const double b2 = B.squaredNorm();
  Eigen::VectorXd v = sample_input(n, engine);
  for (int pass = 0; pass < 2; ++pass) {
    v -= (v.dot(B) / b2) * B;
  }
  v.normalize();
  const double perp = std::sqrt(std::max(0.0, 1.0 - r_target * r_target));
  return r_target * B + perp * std::sqrt(static_cast<double>(n)) * v;
}

inline Eigen::VectorXd plant_aligned_feature(const Eigen::VectorXd& B, double r_target,
                                             std::uint64_t seed) {
  auto engine = rng::make_engine(seed, "plant");
  return plant_aligned_feature(B, r_target, engine);
}

}  // namespace rfm
