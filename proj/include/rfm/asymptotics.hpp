#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "rfm/errors.hpp"
#include "rfm/linalg.hpp"
#include "rfm/model.hpp"

// Marchenko-Pastur predictions for the linearized fixed-point error.
//
// Convention: for K = beta N feature rows on the sphere, Q = J J^T / N has
// K - N zero eigenvalues (beta > 1) and N nonzero ones filling
// [(1 - sqrt(beta))^2, (1 + sqrt(beta))^2]. The density below is the
// normalized law of the nonzero part, so its mean is max(1, beta) and
// (1/N) tr Q = beta. This is the spectrum of J^T J / N (same nonzero values);
// whether one reads it off J J^T or J^T J makes no difference for K >= N.

namespace rfm {

struct MpLaw {
  double beta = 1.0;
  double lambda_minus = 0.0;
  double lambda_plus = 4.0;

  static MpLaw make(double beta) {
    detail::require(beta > 0.0 && std::isfinite(beta), "MpLaw: beta must be finite and > 0");
    const double s = std::sqrt(beta);
    return MpLaw{beta, (1.0 - s) * (1.0 - s), (1.0 + s) * (1.0 + s)};
  }
};

inline double mp_density(double lambda, const MpLaw& law) {
  if (lambda <= law.lambda_minus || lambda >= law.lambda_plus) {
    return 0.0;
  }
  const double width = (lambda - law.lambda_minus) * (law.lambda_plus - lambda);
  return std::sqrt(width) / (2.0 * std::numbers::pi * lambda * std::min(1.0, law.beta));
}

/// (1/N) sum over the nonzero eigenvalues of lambda / (c + lambda) in the MP limit,
/// 1/2 [1 + beta + c - sqrt((c + 1 + beta)^2 - 4 beta)], evaluated without the
/// cancellation that the literal form suffers at large beta.
inline double mp_shifted_mean(double c_shift, double beta) {
  detail::require(c_shift >= 0.0, "mp_shifted_mean: shift must be >= 0");
  detail::require(beta > 0.0 && std::isfinite(beta), "mp_shifted_mean: beta must be finite and > 0");
  const double a = 1.0 + beta + c_shift;
  const double root = std::sqrt(std::max(0.0, a * a - 4.0 * beta));
  return 2.0 * beta / (a + root);
}

struct AsymptoticPrediction {
  double beta = 0.0;
  Activation activation = Activation::Erf;
  double eg_star = 0.0;
  double quadratic_form = 0.0;  // <R^T S^-1 R> (erf) or <Rhat^T Qhat^-1 Rhat> (ReLU)
};

namespace detail {

inline constexpr double kErfShift = std::numbers::pi / 3.0 - 1.0;
inline constexpr double kReluShift = 1.0 - 2.0 * std::numbers::inv_pi;
inline constexpr double kReluA = 1.0 / (0.5 - 0.5 * std::numbers::inv_pi);

inline void require_regime(double beta) {
  if (!(beta >= 1.0)) {
    throw OutOfRegime("analytic plateau curves need K >= N (beta >= 1)");
  }
}

}  // namespace detail

inline AsymptoticPrediction erf_plateau_curve(double beta) {
  detail::require_regime(beta);
  AsymptoticPrediction p{beta, Activation::Erf, 0.0, mp_shifted_mean(detail::kErfShift, beta)};
  p.eg_star = (std::numbers::pi / 3.0 - p.quadratic_form) / (2.0 * std::numbers::pi);
  return p;
}

/// eps* = 1/4 - 1/2 [ m(1 - 2/pi, beta)/4 + (1/(4 pi^2)) K a / (1 + K a / (2 pi)) ],
/// a = 1 / (1/2 - 1/(2 pi)). The rank-one correction to the trace term is O(1/N)
/// and dropped.
inline AsymptoticPrediction relu_plateau_curve(double beta, long K) {
  detail::require_regime(beta);
  detail::require(K >= 1, "relu_plateau_curve: K must be >= 1");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double ka = static_cast<double>(K) * detail::kReluA;
  const double entry_sum = ka / (1.0 + ka / two_pi);
  AsymptoticPrediction p{beta, Activation::ReLU, 0.0, 0.0};
  p.quadratic_form = mp_shifted_mean(detail::kReluShift, beta) / 4.0 +
                     entry_sum / (4.0 * std::numbers::pi * std::numbers::pi);
  p.eg_star = 0.25 - 0.5 * p.quadratic_form;
  return p;
}

struct PlateauLimits {
  double erf = 0.0;
  double relu = 0.0;
};

inline PlateauLimits plateau_limits() {
  return {(std::numbers::pi / 3.0 - 1.0) / (2.0 * std::numbers::pi),
          0.125 - 0.25 * std::numbers::inv_pi};
}

inline double plateau_limit(Activation act) {
  const PlateauLimits l = plateau_limits();
  return act == Activation::Erf ? l.erf : l.relu;
}

/// Inverse of Qhat = A + s v v^T with A = (Q + shift I)/4 and v = (1, ..., 1),
/// assembled through Sherman-Morrison:
/// A^-1 - s A^-1 v v^T A^-1 / (1 + s v^T A^-1 v).
inline Eigen::MatrixXd sherman_morrison_inverse(const Eigen::MatrixXd& Q,
                                                double diag_shift = detail::kReluShift,
                                                double rank1_scale = 0.5 * std::numbers::inv_pi) {
  detail::require(Q.rows() == Q.cols(), "sherman_morrison_inverse: Q must be square");
  Eigen::MatrixXd A = 0.25 * Q;
  A.diagonal().array() += 0.25 * diag_shift;
  const Eigen::MatrixXd a_inv = SpdFactor(A).inverse();
  const Eigen::VectorXd u = a_inv.rowwise().sum();
  const double denom = 1.0 + rank1_scale * u.sum();
  return a_inv - (rank1_scale / denom) * (u * u.transpose());
}

/// Solves (J J^T / N + shift I) x = b. For K > N this goes through the Woodbury
/// identity with an N x N factorization, so K x K matrices are never formed.
class ShiftedGramSolver {
 public:
  ShiftedGramSolver(const Eigen::MatrixXd& J, double shift) : J_(J), shift_(shift) {
    detail::require(shift > 0.0, "ShiftedGramSolver: shift must be > 0");
    const auto k = J.rows();
    const auto n = J.cols();
    low_rank_ = k > n;
    Eigen::MatrixXd m;
    if (low_rank_) {
      m = Eigen::MatrixXd::Zero(n, n);
      m.selfadjointView<Eigen::Lower>().rankUpdate(J.transpose());
      m = m.selfadjointView<Eigen::Lower>();
      m.diagonal().array() += shift * static_cast<double>(n);
    } else {
      m = Eigen::MatrixXd::Zero(k, k);
      m.selfadjointView<Eigen::Lower>().rankUpdate(J, 1.0 / static_cast<double>(n));
      m = m.selfadjointView<Eigen::Lower>();
      m.diagonal().array() += shift;
    }
    factor_.emplace(m);
  }
  ShiftedGramSolver(Eigen::MatrixXd&&, double) = delete;

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    if (!low_rank_) {
      return factor_->solve(b);
    }
    const Eigen::VectorXd t = factor_->solve(J_.transpose() * b);
    return (b - J_ * t) / shift_;
  }

 private:
  const Eigen::MatrixXd& J_;
  double shift_;
  bool low_rank_ = false;
  std::optional<SpdFactor> factor_;
};

/// Linearized fixed-point error of one sampled ensemble, computed without
/// forming K x K matrices. Matches asymptotic_error(hidden_correlations(...,
/// Linearized)) up to rounding; assumes the sphere normalization Q_ii = 1.
inline AsymptoticPrediction linearized_asymptotic_error(const FeatureEnsemble& ens, Activation act) {
  const double n = ens.N();
  const Eigen::VectorXd R = ens.J * ens.B / n;
  AsymptoticPrediction p;
  p.beta = static_cast<double>(ens.K()) / n;
  p.activation = act;
  if (act == Activation::Erf) {
    const ShiftedGramSolver s(ens.J, detail::kErfShift);
    p.quadratic_form = R.dot(s.solve(R));
    p.eg_star = (std::numbers::pi / 3.0 - p.quadratic_form) / (2.0 * std::numbers::pi);
    return p;
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const ShiftedGramSolver s(ens.J, detail::kReluShift);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(ens.K());
  const Eigen::VectorXd r_hat = (0.25 * R).array() + 1.0 / two_pi;
  const Eigen::VectorXd w = 4.0 * s.solve(r_hat);  // A^-1 Rhat
  const Eigen::VectorXd u = 4.0 * s.solve(ones);   // A^-1 v
  p.quadratic_form = r_hat.dot(w) - r_hat.dot(u) * w.sum() / (two_pi + u.sum());
  p.eg_star = 0.25 - 0.5 * p.quadratic_form;
  return p;
}

/// Nonzero part of the spectrum of Q = J J^T / N, ascending.
inline Eigen::VectorXd nonzero_spectrum(const FeatureEnsemble& ens) {
  const double n = ens.N();
  Eigen::MatrixXd gram;
  if (ens.K() >= ens.N()) {
    gram = ens.J.transpose() * ens.J / n;
  } else {
    gram = ens.J * ens.J.transpose() / n;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw NumericError("nonzero_spectrum: eigenvalue computation failed");
  }
  return eig.eigenvalues();
}

}  // namespace rfm
