#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "rfm/errors.hpp"
#include "rfm/linalg.hpp"
#include "rfm/model.hpp"

namespace rfm {

using WeightVector = Eigen::VectorXd;

/// eps_g = 1/2 <zeta^2> + 1/2 c^T Qtilde c - c^T Rtilde, kept term by term.
struct ErrorReport {
  double teacher_term = 0.0;
  double quadratic_term = 0.0;
  double linear_term = 0.0;
  double eg = 0.0;
};

inline ErrorReport gen_error(const WeightVector& c, const HiddenCorrelations& hc) {
  detail::require(c.size() == hc.K(), "gen_error: weight dimension mismatch");
  ErrorReport r;
  r.teacher_term = 0.5 * hc.teacher_second_moment;
  r.quadratic_term = 0.5 * c.dot(hc.Qtilde * c);
  r.linear_term = -c.dot(hc.Rtilde);
  r.eg = r.teacher_term + r.quadratic_term + r.linear_term;
  return r;
}

namespace detail {

inline void require_unit_normalization(const OverlapState& ov) {
  constexpr double tol = 1e-10;
  if (std::abs(ov.T - 1.0) > tol || ((ov.Q.diagonal().array() - 1.0).abs() > tol).any()) {
    throw DomainError("closed-form error requires Q_ii = 1 and T = 1");
  }
}

}  // namespace detail

/// Closed form for g = erf(x/sqrt2) at Q_ii = T = 1:
/// (1/pi) [ pi/6 + sum_ij c_i c_j asin(Q_ij/2) - 2 sum_i c_i asin(R_i/2) ].
inline double gen_error_closed_erf(const WeightVector& c, const OverlapState& ov) {
  detail::require(c.size() == ov.K(), "gen_error_closed_erf: weight dimension mismatch");
  detail::require_unit_normalization(ov);
  const int k = ov.K();
  double quad = 0.0;
  double lin = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      quad += c[i] * c[j] * std::asin(detail::clamped_unit(ov.Q(i, j)) / 2.0);
    }
    lin += c[i] * std::asin(detail::clamped_unit(ov.R[i]) / 2.0);
  }
  return (std::numbers::pi / 6.0 + quad - 2.0 * lin) / std::numbers::pi;
}

/// Closed form for ReLU at Q_ii = T = 1.
inline double gen_error_closed_relu(const WeightVector& c, const OverlapState& ov) {
  detail::require(c.size() == ov.K(), "gen_error_closed_relu: weight dimension mismatch");
  detail::require_unit_normalization(ov);
  constexpr double inv_2pi = 0.5 * std::numbers::inv_pi;
  auto kernel = [](double q) {
    const double u = detail::clamped_unit(q);
    return u / 4.0 + inv_2pi * (std::sqrt(std::max(0.0, 1.0 - u * u)) + u * std::asin(u));
  };
  const int k = ov.K();
  double quad = 0.0;
  double lin = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      quad += 0.5 * c[i] * c[j] * kernel(ov.Q(i, j));
    }
    lin += c[i] * kernel(ov.R[i]);
  }
  return quad - lin + 0.25;
}

/// c* = Qtilde^{-1} Rtilde through a Cholesky solve; throws SingularCorrelation.
inline WeightVector optimal_weights(const HiddenCorrelations& hc, Ridge ridge = {}) {
  return SpdFactor(hc.Qtilde, ridge).solve(hc.Rtilde);
}

/// eps* = 1/2 <zeta^2> - 1/2 Rtilde^T Qtilde^{-1} Rtilde.
inline double asymptotic_error(const HiddenCorrelations& hc, Ridge ridge = {}) {
  const WeightVector c = optimal_weights(hc, ridge);
  return 0.5 * hc.teacher_second_moment - 0.5 * hc.Rtilde.dot(c);
}

}  // namespace rfm
