#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>

#include "rfm/errors.hpp"

// Probability calculus of large teacher overlaps. For feature and teacher
// vectors uniform on the sphere, (R + 1)/2 ~ Beta((N-1)/2, (N-1)/2).

namespace rfm {

struct OverlapQuery {
  int N = 3;
  std::optional<long> K;
  double r_star = 0.5;
  double p_star = 0.5;

  void validate() const {
    detail::require(N >= 3, "OverlapQuery: N must be >= 3");
    detail::require(r_star > 0.0 && r_star < 1.0, "OverlapQuery: r_star must lie in (0, 1)");
    detail::require(p_star > 0.0 && p_star < 1.0, "OverlapQuery: p_star must lie in (0, 1)");
    detail::require(!K || *K >= 1, "OverlapQuery: K must be >= 1");
  }
};

namespace detail {

inline constexpr int kBetaMaxIterations = 500;

// Continued fraction for I_z(a, b) (modified Lentz), valid and fast for
// z < (a + 1) / (a + b + 2).
inline double ibeta_continued_fraction(double z, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * z / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kBetaMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * z / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * z / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) {
      const double log_front = a * std::log(z) + b * std::log1p(-z) -
                               (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
      return std::exp(log_front) * h / a;
    }
  }
  throw NumericError("reg_inc_beta: continued fraction did not converge");
}

// (I_z(a, b), 1 - I_z(a, b)); the smaller of the two is computed directly.
inline std::pair<double, double> ibeta_pair(double z, double a, double b) {
  detail::require(z >= 0.0 && z <= 1.0, "reg_inc_beta: z must lie in [0, 1]");
  detail::require(a > 0.0 && b > 0.0, "reg_inc_beta: a and b must be > 0");
  if (z == 0.0) return {0.0, 1.0};
  if (z == 1.0) return {1.0, 0.0};
  if (z == 0.5 && a == b) return {0.5, 0.5};
  if (z <= (a + 1.0) / (a + b + 2.0)) {
    const double v = ibeta_continued_fraction(z, a, b);
    return {v, 1.0 - v};
  }
  const double w = ibeta_continued_fraction(1.0 - z, b, a);
  return {1.0 - w, w};
}

}  // namespace detail

/// Regularized incomplete beta function I_z(a, b).
inline double reg_inc_beta(double z, double a, double b) { return detail::ibeta_pair(z, a, b).first; }

/// 1 - I_z(a, b), accurate when I_z is close to one.
inline double reg_inc_beta_complement(double z, double a, double b) {
  return detail::ibeta_pair(z, a, b).second;
}

namespace detail {

inline void require_overlap_args(double r_star, int N) {
  detail::require(r_star >= -1.0 && r_star <= 1.0, "overlap_cdf: r_star must lie in [-1, 1]");
  detail::require(N >= 3, "overlap_cdf: N must be >= 3");
}

}  // namespace detail

/// F(r*; N) = P(R <= r*) = I_{(r*+1)/2}((N-1)/2, (N-1)/2).
inline double overlap_cdf(double r_star, int N) {
  detail::require_overlap_args(r_star, N);
  const double a = 0.5 * (N - 1);
  return reg_inc_beta(0.5 * (r_star + 1.0), a, a);
}

/// 1 - F(r*; N), computed as I_{(1-r*)/2}(a, a) so that tiny tails survive.
inline double overlap_tail(double r_star, int N) {
  detail::require_overlap_args(r_star, N);
  const double a = 0.5 * (N - 1);
  return reg_inc_beta(0.5 * (1.0 - r_star), a, a);
}

namespace detail {

inline double log_overlap_cdf(double r_star, int N) { return std::log1p(-overlap_tail(r_star, N)); }

inline double prob_max_from_log_cdf(double log_cdf, double K) { return -std::expm1(K * log_cdf); }

}  // namespace detail

/// P(max_i R_i > r*) = 1 - F^K over K independent features.
inline double prob_max_overlap(double r_star, int N, long K) {
  detail::require(K >= 1, "prob_max_overlap: K must be >= 1");
  return detail::prob_max_from_log_cdf(detail::log_overlap_cdf(r_star, N), static_cast<double>(K));
}

/// ln(1 - p*) / ln F as a real number; +inf when F rounds to one. Useful where
/// required_k_exact overflows its integer range.
inline double required_k_real(double r_star, int N, double p_star) {
  detail::require(p_star > 0.0 && p_star < 1.0, "required_k_real: p_star must lie in (0, 1)");
  const double log_cdf = detail::log_overlap_cdf(r_star, N);
  if (log_cdf == 0.0) return std::numeric_limits<double>::infinity();
  return std::log1p(-p_star) / log_cdf;
}

/// Smallest K with prob_max_overlap >= p*, i.e. ceil(ln(1 - p*) / ln F).
inline long required_k_exact(double r_star, int N, double p_star) {
  detail::require(p_star > 0.0 && p_star < 1.0, "required_k_exact: p_star must lie in (0, 1)");
  const double log_cdf = detail::log_overlap_cdf(r_star, N);
  if (log_cdf == 0.0) {
    throw Unsatisfiable("required_k_exact: F(r*; N) = 1 to working precision");
  }
  const double k_real = std::log1p(-p_star) / log_cdf;
  if (!(k_real < 9.0e15)) {
    throw Unsatisfiable("required_k_exact: required K exceeds the representable range");
  }
  long k = std::max(1L, static_cast<long>(std::ceil(k_real)));
  while (k > 1 && detail::prob_max_from_log_cdf(log_cdf, static_cast<double>(k - 1)) >= p_star) --k;
  while (detail::prob_max_from_log_cdf(log_cdf, static_cast<double>(k)) < p_star) ++k;
  return k;
}

/// Exponential estimate sqrt(2N - 4) exp((N/2) ln(1/(1 - r*^2))) |ln(1 - p*)|.
/// Overflows to +inf for very large N.
inline double required_k_chernoff(double r_star, int N, double p_star) {
  detail::require(N >= 4, "required_k_chernoff: N must be >= 4");
  detail::require(r_star > 0.0 && r_star < 1.0, "required_k_chernoff: r_star must lie in (0, 1)");
  detail::require(p_star > 0.0 && p_star < 1.0, "required_k_chernoff: p_star must lie in (0, 1)");
  const double log_growth = -0.5 * N * std::log1p(-r_star * r_star);
  return std::sqrt(2.0 * N - 4.0) * std::exp(log_growth) * std::abs(std::log1p(-p_star));
}

/// D(p || q) for Bernoulli laws.
inline double kl_bernoulli(double p, double q) {
  if (!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0)) {
    throw DomainError("kl_bernoulli: arguments must lie in (0, 1)");
  }
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

/// Binomial lower tail bound (2N - 4)^{-1/2} exp(-(N - 2) D((N-3)/(2N-4) || (r*+1)/2))
/// on 1 - F(r*; N), with the parameter choices kept exactly as stated.
inline double chernoff_tail_lower_bound(double r_star, int N) {
  detail::require(N >= 4, "chernoff_tail_lower_bound: N must be >= 4");
  const double p = (N - 3.0) / (2.0 * N - 4.0);
  return std::exp(-(N - 2.0) * kl_bernoulli(p, 0.5 * (r_star + 1.0))) / std::sqrt(2.0 * N - 4.0);
}

}  // namespace rfm
