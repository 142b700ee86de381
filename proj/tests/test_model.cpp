#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "rfm/model.hpp"
#include "rfm/rng.hpp"

using namespace rfm;

namespace {

double pair_oracle(Activation act, double c11, double c12, double c22) {
  return act == Activation::Erf ? oracle::erf_pair(c11, c12, c22) : oracle::relu_pair(c11, c12, c22);
}

}  // namespace

TEST(Activation, Values) {
  EXPECT_DOUBLE_EQ(activate(Activation::ReLU, -1.5), 0.0);
  EXPECT_DOUBLE_EQ(activate(Activation::ReLU, 2.5), 2.5);
  EXPECT_NEAR(activate(Activation::Erf, 1.0), std::erf(1.0 / std::numbers::sqrt2), 1e-15);
  EXPECT_DOUBLE_EQ(activate(Activation::Erf, 0.0), 0.0);
}

TEST(TeacherMoment, MatchesQuadrature) {
  for (auto act : {Activation::Erf, Activation::ReLU}) {
    EXPECT_NEAR(teacher_second_moment(act), pair_oracle(act, 1.0, 1.0, 1.0), 1e-10) << to_string(act);
  }
}

class I2Grid : public ::testing::TestWithParam<Activation> {};

TEST_P(I2Grid, MatchesQuadratureOnUnitVariances) {
  const Activation act = GetParam();
  for (int k = 0; k <= 20; ++k) {
    const double c = -1.0 + 0.1 * k;
    EXPECT_NEAR(i2(act, 1.0, c, 1.0), pair_oracle(act, 1.0, c, 1.0), 1e-8) << "c12 = " << c;
  }
}

TEST_P(I2Grid, MatchesQuadratureOnUnequalVariances) {
  const Activation act = GetParam();
  const double c11 = 0.7, c22 = 1.9;
  const double s = std::sqrt(c11 * c22);
  for (int k = 0; k <= 10; ++k) {
    const double c12 = s * (-1.0 + 0.2 * k);
    EXPECT_NEAR(i2(act, c11, c12, c22), pair_oracle(act, c11, c12, c22), 1e-8) << "c12 = " << c12;
  }
}

TEST_P(I2Grid, SymmetricInArguments) {
  const Activation act = GetParam();
  EXPECT_DOUBLE_EQ(i2(act, 0.4, 0.3, 1.3), i2(act, 1.3, 0.3, 0.4));
}

TEST_P(I2Grid, MonotoneInCovariance) {
  const Activation act = GetParam();
  double prev = -1.0;
  for (int k = 0; k <= 40; ++k) {
    const double v = i2(act, 1.0, -1.0 + 0.05 * k, 1.0);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST_P(I2Grid, RejectsNonPsdCovariance) {
  EXPECT_THROW(i2(GetParam(), 1.0, 1.1, 1.0), DomainError);
  EXPECT_THROW(i2(GetParam(), -1.0, 0.0, 1.0), DomainError);
}

INSTANTIATE_TEST_SUITE_P(Both, I2Grid, ::testing::Values(Activation::Erf, Activation::ReLU),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(I2, ReluZeroVarianceGivesZero) { EXPECT_EQ(i2(Activation::ReLU, 0.0, 0.0, 1.0), 0.0); }

TEST(I2, ErfIndependentUnitsAreUncorrelated) { EXPECT_EQ(i2(Activation::Erf, 1.0, 0.0, 1.0), 0.0); }

TEST(Sampling, SphereNormalization) {
  const FeatureEnsemble ens = sample_sphere_features(NetworkShape{40, 25}, 3);
  EXPECT_NEAR(ens.B.squaredNorm(), 40.0, 1e-10);
  for (int i = 0; i < ens.K(); ++i) EXPECT_NEAR(ens.J.row(i).squaredNorm(), 40.0, 1e-10);
  const OverlapState ov = compute_overlaps(ens);
  EXPECT_NEAR(ov.T, 1.0, 1e-12);
  EXPECT_LT((ov.Q.diagonal().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_LT((ov.Q - ov.Q.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((ov.Q - ens.J * ens.J.transpose() / 40.0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((ov.R - ens.J * ens.B / 40.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sampling, DeterministicPerSeed) {
  const auto a = sample_sphere_features(NetworkShape{10, 5}, 99);
  const auto b = sample_sphere_features(NetworkShape{10, 5}, 99);
  const auto c = sample_sphere_features(NetworkShape{10, 5}, 100);
  EXPECT_EQ(a.J, b.J);
  EXPECT_EQ(a.B, b.B);
  EXPECT_NE(a.J, c.J);
}

TEST(Sampling, OverlapsAreCentredWithVarianceOneOverN) {
  const int N = 50;
  const FeatureEnsemble ens = sample_sphere_features(NetworkShape{N, 4000}, 17);
  const OverlapState ov = compute_overlaps(ens);
  const double mean = ov.R.mean();
  const double var = (ov.R.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 4.0 * std::sqrt(1.0 / N / 4000));
  EXPECT_NEAR(var, 1.0 / N, 0.1 / N);
}

TEST(HiddenCorrelations, ExactMatchesMonteCarlo) {
  const int N = 20, K = 4;
  const FeatureEnsemble ens = sample_sphere_features(NetworkShape{N, K}, 5);
  const OverlapState ov = compute_overlaps(ens);
  for (auto act : {Activation::Erf, Activation::ReLU}) {
    const HiddenCorrelations hc = hidden_correlations(ov, act, CorrelationMode::Exact);
    auto engine = rng::make_engine(8, "test-mc");
    const int n = 200000;
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(K, K);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(K);
    double t = 0.0;
    for (int s = 0; s < n; ++s) {
      const Eigen::VectorXd xi = sample_input(N, engine);
      const Eigen::VectorXd g = activate(act, student_fields(ens, xi));
      const double z = forward_teacher(ens, xi, act);
      q += g * g.transpose();
      r += z * g;
      t += z * z;
    }
    q /= n;
    r /= n;
    t /= n;
    EXPECT_LT((q - hc.Qtilde).cwiseAbs().maxCoeff(), 0.01) << to_string(act);
    EXPECT_LT((r - hc.Rtilde).cwiseAbs().maxCoeff(), 0.01) << to_string(act);
    EXPECT_NEAR(t, hc.teacher_second_moment, 0.01);
  }
}

TEST(HiddenCorrelations, LinearizedEntries) {
  OverlapState ov;
  ov.Q = Eigen::Matrix2d{{1.0, 0.2}, {0.2, 1.0}};
  ov.R = Eigen::Vector2d{0.3, -0.1};
  const auto erf = hidden_correlations(ov, Activation::Erf, CorrelationMode::Linearized);
  EXPECT_DOUBLE_EQ(erf.Qtilde(0, 0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(erf.Qtilde(0, 1), 0.2 / std::numbers::pi);
  EXPECT_DOUBLE_EQ(erf.Rtilde[1], -0.1 / std::numbers::pi);
  const auto relu = hidden_correlations(ov, Activation::ReLU, CorrelationMode::Linearized);
  EXPECT_DOUBLE_EQ(relu.Qtilde(1, 1), 0.5);
  EXPECT_DOUBLE_EQ(relu.Qtilde(1, 0), 0.2 / 4.0 + 0.5 / std::numbers::pi);
  EXPECT_DOUBLE_EQ(relu.Rtilde[0], 0.3 / 4.0 + 0.5 / std::numbers::pi);
}

TEST(HiddenCorrelations, LinearizedIsFirstOrderOfExact) {
  // For small overlaps the exact and linearized entries differ at third order
  // (erf) or second order (ReLU).
  for (double q : {0.05, 0.02, 0.01}) {
    OverlapState ov;
    ov.Q = Eigen::Matrix2d{{1.0, q}, {q, 1.0}};
    ov.R = Eigen::Vector2d{q, q};
    const auto ee = hidden_correlations(ov, Activation::Erf, CorrelationMode::Exact);
    const auto el = hidden_correlations(ov, Activation::Erf, CorrelationMode::Linearized);
    EXPECT_LT(std::abs(ee.Qtilde(0, 1) - el.Qtilde(0, 1)), 0.01 * q * q);
    const auto re = hidden_correlations(ov, Activation::ReLU, CorrelationMode::Exact);
    const auto rl = hidden_correlations(ov, Activation::ReLU, CorrelationMode::Linearized);
    EXPECT_LT(std::abs(re.Qtilde(0, 1) - rl.Qtilde(0, 1)), 0.1 * q * q);
    EXPECT_LT(std::abs(re.Rtilde[0] - rl.Rtilde[0]), 0.1 * q * q);
  }
}

TEST(HiddenCorrelations, ExactMatrixIsPositiveSemidefinite) {
  const auto ens = sample_sphere_features(NetworkShape{8, 30}, 21);
  const auto ov = compute_overlaps(ens);
  for (auto act : {Activation::Erf, Activation::ReLU}) {
    const auto hc = hidden_correlations(ov, act, CorrelationMode::Exact);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hc.Qtilde);
    EXPECT_GT(eig.eigenvalues().minCoeff(), -1e-12);
  }
}

TEST(PlantAlignedFeature, HitsTargetOverlapExactly) {
  auto engine = rng::make_engine(4, "test-plant");
  const Eigen::VectorXd B = sample_sphere_vector(12, engine);
  for (double r : {0.0, 0.3, 0.75, 1.0}) {
    const Eigen::VectorXd j = plant_aligned_feature(B, r, 10);
    EXPECT_NEAR(j.dot(B) / 12.0, r, 1e-12);
    EXPECT_NEAR(j.squaredNorm(), 12.0, 1e-10);
  }
  EXPECT_THROW(plant_aligned_feature(B, 1.2, 10), std::invalid_argument);
}
