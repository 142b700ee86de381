#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the library's closed forms.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>

namespace oracle {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Hermite rule for the standard normal weight (probabilists'),
/// from the Golub-Welsch eigenproblem of the Jacobi matrix.
inline Rule gauss_hermite_normal(int n) {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jac(k, k - 1) = jac(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jac);
  Rule r;
  for (int i = 0; i < n; ++i) {
    const double v0 = eig.eigenvectors()(0, i);
    r.nodes.push_back(eig.eigenvalues()[i]);
    r.weights.push_back(v0 * v0);
  }
  return r;
}

/// E[f(u) g(v)] for (u, v) ~ N(0, [[c11, c12], [c12, c22]]) by a tensor
/// Gauss-Hermite rule after a 2x2 Cholesky-like split.
template <typename F, typename G>
double gaussian_pair_expectation(F f, G g, double c11, double c12, double c22, int n = 96) {
  static thread_local std::vector<std::pair<int, Rule>> cache;
  const Rule* rule = nullptr;
  for (const auto& [k, r] : cache) {
    if (k == n) rule = &r;
  }
  if (rule == nullptr) {
    cache.emplace_back(n, gauss_hermite_normal(n));
    rule = &cache.back().second;
  }
  const double a = std::sqrt(c11);
  const double b = a > 0.0 ? c12 / a : 0.0;
  const double c = std::sqrt(std::max(0.0, c22 - b * b));
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z1 = rule->nodes[i];
    const double fu = f(a * z1);
    double inner = 0.0;
    for (int j = 0; j < n; ++j) {
      inner += rule->weights[j] * g(b * z1 + c * rule->nodes[j]);
    }
    sum += rule->weights[i] * fu * inner;
  }
  return sum;
}

inline double g_erf(double x) { return std::erf(x / std::numbers::sqrt2); }
inline double g_relu(double x) { return x > 0.0 ? x : 0.0; }

inline double erf_pair(double c11, double c12, double c22) {
  return gaussian_pair_expectation(g_erf, g_erf, c11, c12, c22);
}

/// E[relu(u) relu(v)]. The inner expectation over the second coordinate is the
/// one-dimensional identity E[relu(m + s z)] = m Phi(m/s) + s phi(m/s); the
/// outer integral over u > 0 is done by adaptive Gauss-Kronrod so the kink at
/// zero sits on the boundary instead of inside a polynomial rule.
inline double relu_pair(double c11, double c12, double c22) {
  if (c11 <= 0.0 || c22 <= 0.0) return 0.0;
  const double su = std::sqrt(c11);
  const double rho = std::clamp(c12 / (su * std::sqrt(c22)), -1.0, 1.0);
  const double sv = std::sqrt(c22);
  const double s = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); };
  auto Phi = [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); };
  auto inner = [&](double z) {
    const double m = rho * z;
    if (s == 0.0) return m > 0.0 ? m : 0.0;
    return m * Phi(m / s) + s * phi(m / s);
  };
  auto integrand = [&](double z) { return z * inner(z) * phi(z); };
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-14);
  return su * sv * v;
}

}  // namespace oracle
