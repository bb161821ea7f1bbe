#include "covshift/simulate.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

namespace covshift {
namespace {

TEST(FeatureTransform, FixedPointsAndOddSymmetry) {
  EXPECT_EQ(feature_transform(Eigen::Vector3d::Zero()), Eigen::Vector3d::Zero());
  const Eigen::Vector3d ones = feature_transform(Eigen::Vector3d::Ones());
  EXPECT_EQ(ones, Eigen::Vector3d::Constant(3.0));
  EXPECT_EQ(feature_transform(-Eigen::Vector3d::Ones()), Eigen::Vector3d::Constant(-3.0));
  const Eigen::Vector3d x(2.5, -0.7, 11.0);
  EXPECT_EQ(feature_transform(-x), -feature_transform(x));
  EXPECT_NEAR(feature_transform(x)(0), 2.5 * (std::pow(2.5, 0.1) + std::pow(2.5, 0.3) + std::pow(2.5, 0.5)), 1e-14);
}

TEST(Covariance, BandedEntries) {
  const auto s = banded_covariance(0.0);
  EXPECT_EQ(s(0, 0), 1.0);
  EXPECT_EQ(s(0, 1), 0.5);
  EXPECT_EQ(s(0, 2), 0.25);
  const auto t = banded_covariance(1.0);
  EXPECT_EQ(t(1, 1), 2.0);
  EXPECT_EQ(t(2, 0), 0.5);
}

TEST(Generate, LayoutAndConsistency) {
  SimConfig cfg;
  cfg.seed = 3;
  const auto sim = generate(cfg);
  const auto& d = sim.data;
  ASSERT_EQ(d.size(), 2560u);
  EXPECT_EQ(d.n_source(), 512u);
  EXPECT_TRUE(validate(d).empty());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d.group[i], i < 512 ? 1 : 0);
    if (d.is_source(i)) {
      const auto k = static_cast<Eigen::Index>(i);
      const double expected = *d.treatment[i] == 1 ? sim.outcomes.y1(k) : sim.outcomes.y0(k);
      EXPECT_EQ(*d.outcome[i], expected);
    }
  }
}

TEST(Generate, FairCoinTreatmentWhenBetaIsZero) {
  SimConfig cfg;
  cfg.n_source = 5000;
  cfg.n_target = 10;
  cfg.seed = 21;
  const auto sim = generate(cfg);
  double treated = 0;
  for (std::size_t i = 0; i < 5000; ++i) treated += *sim.data.treatment[i];
  EXPECT_NEAR(treated / 5000.0, 0.5, 3.0 * std::sqrt(0.25 / 5000.0));
}

TEST(Generate, TreatedFractionFallsWithBeta) {
  SimConfig cfg;
  cfg.n_source = 4000;
  cfg.n_target = 10;
  double previous = 1.0;
  for (double beta : {0.0, 0.1, 0.25, 0.5}) {
    cfg.beta_treatment = beta;
    const auto sim = generate(cfg);
    double treated = 0;
    for (std::size_t i = 0; i < 4000; ++i) treated += *sim.data.treatment[i];
    EXPECT_LT(treated / 4000.0, previous);
    previous = treated / 4000.0;
  }
}

TEST(Generate, NoiseFreeEffectIdentity) {
  SimConfig cfg;
  cfg.noise_sd = 0.0;
  cfg.seed = 4;
  cfg.n_source = 50;
  cfg.n_target = 50;
  const auto sim = generate(cfg);
  for (Eigen::Index i = 0; i < 100; ++i) {
    const Eigen::Vector3d x = sim.data.covariates.row(i).transpose();
    const Eigen::Vector3d t = feature_transform(x);
    const double tau = 5.0 + 0.4 * t(0) * t(1) + 0.7 * t(2) - 0.1 * t(0) - 0.5 * t(1) * t(2);
    EXPECT_NEAR(sim.outcomes.y1(i) - sim.outcomes.y0(i), tau, 1e-10);
    EXPECT_NEAR(sim.truth.mu1(x) - sim.truth.mu0(x), tau, 1e-10);
  }
}

TEST(Generate, SharedNoiseFlag) {
  SimConfig cfg;
  cfg.seed = 8;
  cfg.n_source = 30;
  cfg.n_target = 30;
  const auto shared = generate(cfg);
  cfg.shared_noise = false;
  const auto split = generate(cfg);
  int equal_shared = 0, equal_split = 0;
  for (Eigen::Index i = 0; i < 60; ++i) {
    const Eigen::Vector3d xa = shared.data.covariates.row(i).transpose();
    const double ra = (shared.outcomes.y1(i) - sim_mu1(xa)) - (shared.outcomes.y0(i) - sim_mu0(xa));
    equal_shared += std::abs(ra) < 1e-9;
    const Eigen::Vector3d xb = split.data.covariates.row(i).transpose();
    const double rb = (split.outcomes.y1(i) - sim_mu1(xb)) - (split.outcomes.y0(i) - sim_mu0(xb));
    equal_split += std::abs(rb) < 1e-9;
  }
  EXPECT_EQ(equal_shared, 60);
  EXPECT_EQ(equal_split, 0);
}

TEST(Generate, SameSeedSameBytes) {
  SimConfig cfg;
  cfg.seed = 99;
  std::ostringstream a, b, ta, tb;
  const auto s1 = generate(cfg);
  const auto s2 = generate(cfg);
  write_csv(a, s1.data);
  write_csv(b, s2.data);
  write_truth_csv(ta, s1);
  write_truth_csv(tb, s2);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(ta.str(), tb.str());
  cfg.seed = 100;
  std::ostringstream c;
  write_csv(c, generate(cfg).data);
  EXPECT_NE(a.str(), c.str());
}

TEST(Generate, RejectsBadConfig) {
  SimConfig cfg;
  cfg.n_target = 0;
  EXPECT_THROW(generate(cfg), std::invalid_argument);
  cfg = SimConfig{};
  cfg.cov_source(0, 0) = -1.0;
  EXPECT_THROW(generate(cfg), std::invalid_argument);
}

TEST(TrueNuisances, SamplingScoreAveragesToSourceShare) {
  SimConfig cfg;
  cfg.seed = 13;
  const auto sim = generate(cfg);
  const auto n = static_cast<Eigen::Index>(sim.data.size());
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) s(i) = sim.truth.s(sim.data.row(static_cast<std::size_t>(i)));
  const double q = sim.data.source_fraction();
  const double mean = s.mean();
  const double se = std::sqrt((s.array() - mean).square().sum() / static_cast<double>(n - 1) / static_cast<double>(n));
  EXPECT_NEAR(mean, q, 3.0 * se);
}

TEST(TrueNuisances, SamplingScoreEqualsQWithoutShift) {
  SimConfig cfg;
  cfg.mu_target = cfg.mu_source;
  cfg.cov_target = cfg.cov_source;
  const auto truth = true_nuisances(cfg);
  EXPECT_NEAR(truth.s(Eigen::Vector3d(10.5, 2.0, 7.3)), 512.0 / 2560.0, 1e-14);
}

TEST(TrueNuisances, PropensityFormula) {
  SimConfig cfg;
  cfg.beta_treatment = 0.3;
  const auto truth = true_nuisances(cfg);
  const Eigen::Vector3d x(10.0, 3.0, 7.0);
  EXPECT_NEAR(truth.e1(x), 1.0 / (1.0 + std::exp(0.3 * feature_transform(x)(1))), 1e-15);
  cfg.beta_treatment = 0.0;
  EXPECT_EQ(true_nuisances(cfg).e1(x), 0.5);
}

TEST(GaussianSampler, MomentsWithinThreeStandardErrors) {
  const Eigen::Vector3d mu(9.0, 4.0, 6.0);
  const Eigen::Matrix3d cov = banded_covariance(1.0);
  const detail::Gaussian3 g(mu, cov);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 100000;
  Eigen::MatrixXd draws(n, 3);
  for (int i = 0; i < n; ++i) draws.row(i) = g.draw(rng, normal).transpose();
  const Eigen::Vector3d mean = draws.colwise().mean().transpose();
  const Eigen::MatrixXd centered = draws.rowwise() - mean.transpose();
  const Eigen::Matrix3d sample_cov = centered.transpose() * centered / (n - 1.0);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(mean(j), mu(j), 3.0 * std::sqrt(cov(j, j) / n)) << j;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double se = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / n);
      EXPECT_NEAR(sample_cov(i, j), cov(i, j), 3.0 * se) << i << "," << j;
    }
}

TEST(GaussianSampler, LogDensityMatchesClosedForm) {
  const detail::Gaussian3 g(Eigen::Vector3d(1.0, 2.0, 3.0), Eigen::Matrix3d::Identity() * 4.0);
  const Eigen::Vector3d x(2.0, 0.0, 3.0);
  const double expected = -1.5 * std::log(2.0 * std::numbers::pi * 4.0) - 0.5 * (1.0 + 4.0) / 4.0;
  EXPECT_NEAR(g.log_density(x), expected, 1e-14);
}

TEST(ShiftSweep, TargetMeansAlongDefaultDirection) {
  const SimConfig base;
  EXPECT_EQ(shift_sweep_config(base, 0.0).mu_target, Eigen::Vector3d(10, 3, 7));
  EXPECT_EQ(shift_sweep_config(base, 1.0).mu_target, Eigen::Vector3d(9, 4, 6));
  EXPECT_EQ(shift_sweep_config(base, 2.0).mu_target, Eigen::Vector3d(8, 5, 5));
  const auto c = shift_sweep_config(base, 2.5);
  EXPECT_DOUBLE_EQ((c.mu_target - c.mu_source).cwiseAbs().maxCoeff(), 2.5);
  EXPECT_THROW(shift_sweep_config(base, -1.0), std::invalid_argument);
  EXPECT_EQ(treatment_sweep_config(base, 0.4).beta_treatment, 0.4);
}

}  // namespace
}  // namespace covshift
