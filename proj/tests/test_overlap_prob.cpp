#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "rfm/model.hpp"
#include "rfm/overlap_prob.hpp"
#include "rfm/rng.hpp"

using namespace rfm;

TEST(IncompleteBeta, MatchesBoost) {
  for (double a : {0.5, 1.0, 2.5, 12.0, 49.5, 400.0}) {
    for (double b : {0.5, 3.0, 12.0, 400.0}) {
      for (double z : {1e-6, 0.01, 0.2, 0.5, 0.73, 0.99, 1 - 1e-9}) {
        const double ref = boost::math::ibeta(a, b, z);
        const double refc = boost::math::ibetac(a, b, z);
        EXPECT_NEAR(reg_inc_beta(z, a, b), ref, 1e-13 + 1e-11 * ref) << a << " " << b << " " << z;
        EXPECT_NEAR(reg_inc_beta_complement(z, a, b), refc, 1e-13 + 1e-11 * refc) << a << " " << b << " " << z;
      }
    }
  }
}

TEST(IncompleteBeta, EndpointsAndDomain) {
  EXPECT_EQ(reg_inc_beta(0.0, 2.0, 3.0), 0.0);
  EXPECT_EQ(reg_inc_beta(1.0, 2.0, 3.0), 1.0);
  EXPECT_THROW(reg_inc_beta(1.5, 2.0, 3.0), std::invalid_argument);
  EXPECT_THROW(reg_inc_beta(0.5, 0.0, 3.0), std::invalid_argument);
}

TEST(OverlapCdf, MedianIsExactlyHalf) {
  for (int N : {3, 4, 10, 51, 1000}) EXPECT_EQ(overlap_cdf(0.0, N), 0.5);
}

TEST(OverlapCdf, UniformAtNThree) {
  for (double r : {-0.9, -0.2, 0.5, 0.8}) EXPECT_NEAR(overlap_cdf(r, 3), 0.5 * (r + 1), 1e-12);
  EXPECT_NEAR(overlap_cdf(0.5, 3), 0.75, 1e-12);
}

TEST(OverlapCdf, MonotoneAndSymmetric) {
  for (int N : {5, 20, 80}) {
    double prev = -1.0;
    for (int k = 0; k <= 40; ++k) {
      const double r = -1.0 + 0.05 * k;
      const double f = overlap_cdf(r, N);
      EXPECT_GE(f, prev);
      EXPECT_NEAR(f + overlap_cdf(-r, N), 1.0, 1e-13);
      EXPECT_NEAR(overlap_tail(r, N), 1.0 - f, 1e-13);
      prev = f;
    }
  }
}

TEST(OverlapCdf, TailKeepsPrecisionFarOut) {
  const double t = overlap_tail(0.9, 50);
  EXPECT_GT(t, 0.0);
  EXPECT_NEAR(t, boost::math::ibeta(24.5, 24.5, 0.05), 1e-12 * t);
}

TEST(OverlapCdf, MatchesEmpiricalSphereOverlaps) {
  const int N = 12, n = 20000;
  auto e = rng::make_engine(1, "test-overlap");
  std::vector<double> r(n);
  for (auto& x : r) {
    const Eigen::VectorXd a = sample_sphere_vector(N, e);
    const Eigen::VectorXd b = sample_sphere_vector(N, e);
    x = a.dot(b) / N;
  }
  std::sort(r.begin(), r.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = overlap_cdf(r[i], N);
    ks = std::max({ks, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  EXPECT_LT(ks, 1.63 / std::sqrt(n));  // 1% KS critical value
}

TEST(ProbMaxOverlap, ComplementOfPower) {
  const double f = overlap_cdf(0.4, 10);
  EXPECT_NEAR(prob_max_overlap(0.4, 10, 7), 1.0 - std::pow(f, 7), 1e-14);
  EXPECT_NEAR(prob_max_overlap(0.4, 10, 1), 1.0 - f, 1e-14);
  EXPECT_LE(prob_max_overlap(0.4, 10, 7), prob_max_overlap(0.4, 10, 8));
}

TEST(RequiredK, ExactIsMinimal) {
  for (int N : {3, 8, 20}) {
    for (double r : {0.3, 0.6, 0.8}) {
      for (double p : {0.5, 0.9, 0.99}) {
        const long k = required_k_exact(r, N, p);
        EXPECT_GE(prob_max_overlap(r, N, k), p);
        if (k > 1) EXPECT_LT(prob_max_overlap(r, N, k - 1), p);
      }
    }
  }
  EXPECT_EQ(required_k_exact(0.5, 3, 0.99), 17);
}

TEST(RequiredK, MonotoneInTargets) {
  EXPECT_LE(required_k_exact(0.5, 10, 0.9), required_k_exact(0.5, 10, 0.99));
  EXPECT_LE(required_k_exact(0.5, 10, 0.9), required_k_exact(0.6, 10, 0.9));
  EXPECT_LE(required_k_exact(0.5, 10, 0.9), required_k_exact(0.5, 12, 0.9));
}

TEST(RequiredK, UnsatisfiableWhenCdfIsOne) {
  EXPECT_THROW(required_k_exact(0.99, 2000, 0.9), Unsatisfiable);
  EXPECT_TRUE(std::isinf(required_k_real(0.99, 2000, 0.9)));
}

TEST(RequiredK, ChernoffEstimateReference) {
  EXPECT_NEAR(required_k_chernoff(0.9, 20, 0.99) / 4.5067e8, 1.0, 1e-4);
  EXPECT_THROW(required_k_chernoff(0.5, 3, 0.9), std::invalid_argument);
}

TEST(RequiredK, LogGrowthSlope) {
  std::vector<double> n, lk;
  for (int N = 10; N <= 40; N += 5) {
    n.push_back(N);
    lk.push_back(std::log(static_cast<double>(required_k_exact(0.6, N, 0.9))));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n.size(); ++i) mx += n[i] / n.size(), my += lk[i] / n.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n.size(); ++i) sxy += (n[i] - mx) * (lk[i] - my), sxx += (n[i] - mx) * (n[i] - mx);
  const double target = 0.5 * std::log(1.0 / (1.0 - 0.36));
  EXPECT_NEAR(sxy / sxx / target, 1.0, 0.15);
}

TEST(Kl, ValuesAndDomain) {
  EXPECT_NEAR(kl_bernoulli(0.5, 0.75), 0.143841, 1e-6);
  EXPECT_EQ(kl_bernoulli(0.3, 0.3), 0.0);
  EXPECT_THROW(kl_bernoulli(0.0, 0.5), DomainError);
  EXPECT_THROW(kl_bernoulli(0.5, 1.0), DomainError);
}

TEST(ChernoffBound, LowerBoundsTheTail) {
  for (int N : {10, 20, 50}) {
    for (double r : {0.3, 0.6, 0.9}) {
      EXPECT_LE(chernoff_tail_lower_bound(r, N), overlap_tail(r, N)) << N << " " << r;
    }
  }
}
