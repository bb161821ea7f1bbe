#include "covshift/estimators.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace covshift {
namespace {

using testing::formula_direct_R;
using testing::formula_ipw_R;
using testing::formula_se_R;
using testing::formula_se_V;

NuisanceTable constant_table(Eigen::Index n, double mu0, double mu1, double e1, double s) {
  return {Eigen::VectorXd::Constant(n, mu0), Eigen::VectorXd::Constant(n, mu1), Eigen::VectorXd::Constant(n, e1),
          Eigen::VectorXd::Constant(n, s)};
}

// Rows: source (a=1,y=4), source (a=0,y=1), target, target.
CombinedDataset hand_four() {
  CombinedDataset d;
  d.covariates = Eigen::MatrixXd::Zero(4, 1);
  d.group = {1, 1, 0, 0};
  d.treatment = {1, 0, std::nullopt, std::nullopt};
  d.outcome = {4.0, 1.0, std::nullopt, std::nullopt};
  return d;
}

// Six rows with distinct nuisance values.
struct HandSix {
  CombinedDataset d;
  NuisanceTable t;
  Eigen::VectorXd pi;
};

HandSix hand_six() {
  HandSix h;
  h.d.covariates = Eigen::MatrixXd::Zero(6, 1);
  h.d.group = {1, 1, 1, 0, 0, 0};
  h.d.treatment = {1, 0, 1, std::nullopt, std::nullopt, std::nullopt};
  h.d.outcome = {3.0, 2.0, 5.0, std::nullopt, std::nullopt, std::nullopt};
  h.t.mu0 = (Eigen::VectorXd(6) << 1.5, 2.5, 1.0, 2.0, 0.5, 3.0).finished();
  h.t.mu1 = (Eigen::VectorXd(6) << 2.0, 3.0, 4.0, 1.0, 2.5, 3.5).finished();
  h.t.e1 = (Eigen::VectorXd(6) << 0.5, 0.4, 0.8, 0.5, 0.5, 0.5).finished();
  h.t.s = (Eigen::VectorXd(6) << 0.5, 0.25, 0.8, 0.2, 0.4, 0.5).finished();
  h.pi = (Eigen::VectorXd(6) << 1.0, 0.0, 0.5, 1.0, 0.25, 0.0).finished();
  return h;
}

TEST(DirectR, NullPolicyIsTargetMeanOfMu0) {
  const auto d = hand_four();
  NuisanceTable t = constant_table(4, 0.0, 0.0, 0.5, 0.5);
  t.mu0 << 10.0, 20.0, 3.0, 5.0;
  const auto c = coefficients_direct_R(d, t);
  EXPECT_DOUBLE_EQ(estimate(c, Eigen::VectorXd::Zero(4)).value, 4.0);
}

TEST(DirectR, TreatAllWithConstantSurface) {
  const auto d = hand_four();
  const auto c = coefficients_direct_R(d, constant_table(4, -3.0, 7.25, 0.5, 0.5));
  EXPECT_DOUBLE_EQ(estimate(c, Eigen::VectorXd::Ones(4)).value, 7.25);
}

TEST(DirectR, HandSum) {
  const auto d = hand_four();
  NuisanceTable t = constant_table(4, 1.0, 3.0, 0.5, 0.5);
  const Eigen::Vector4d pi(1.0, 0.0, 1.0, 0.0);
  // q = 1/2: (1/4) * [2 * 3 + 2 * 1] = 2.
  EXPECT_DOUBLE_EQ(estimate(coefficients_direct_R(d, t), pi).value, 2.0);
  const auto c = coefficients_direct_R(d, t);
  EXPECT_EQ(c.a(0), 0.0);
  EXPECT_EQ(c.b(1), 0.0);
}

TEST(IpwR, ZeroOutcomesGiveZero) {
  auto d = hand_four();
  d.outcome = {0.0, 0.0, std::nullopt, std::nullopt};
  const auto c = coefficients_ipw_R(d, constant_table(4, 1.0, 2.0, 0.3, 0.6));
  EXPECT_EQ(estimate(c, Eigen::Vector4d(1, 0, 0.3, 1)).value, 0.0);
}

TEST(IpwR, SingleSourceRowHandValue) {
  CombinedDataset d;
  d.covariates = Eigen::MatrixXd::Zero(2, 1);
  d.group = {1, 0};
  d.treatment = {1, std::nullopt};
  d.outcome = {2.0, std::nullopt};
  const auto c = coefficients_ipw_R(d, constant_table(2, 0.0, 0.0, 0.5, 0.5));
  // (1/2) * [1/(1-0.5)] * 2 / 0.5 * (0.5/0.5) = 4.
  EXPECT_DOUBLE_EQ(estimate(c, Eigen::Vector2d::Ones()).value, 4.0);
  EXPECT_EQ(c.a(1), 0.0);
  EXPECT_EQ(c.b(1), 0.0);
}

TEST(SeR, ReducesToDirectWhenResidualsVanish) {
  auto h = hand_six();
  h.d.outcome[0] = h.t.mu1(0);
  h.d.outcome[1] = h.t.mu0(1);
  h.d.outcome[2] = h.t.mu1(2);
  const auto se = coefficients_se_R(h.d, h.t);
  const auto direct = coefficients_direct_R(h.d, h.t);
  EXPECT_EQ(se.a, direct.a);
  EXPECT_EQ(se.b, direct.b);
}

TEST(SeR, ReducesToIpwWhenRegressionsVanish) {
  auto h = hand_six();
  h.t.mu0.setZero();
  h.t.mu1.setZero();
  const auto se = coefficients_se_R(h.d, h.t);
  const auto ipw = coefficients_ipw_R(h.d, h.t);
  EXPECT_NEAR(estimate(se, h.pi).value, estimate(ipw, h.pi).value, 1e-15);
  EXPECT_LT((se.a - ipw.a).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SeR, SixRowHandSum) {
  const auto h = hand_six();
  // q = 1/2, 1/(1-q) = 2.
  // row0: a=1, pi=1: 2 * 1 * (3-2)/0.5 * (0.5/0.5) = 4
  // row1: a=0, pi=0: 2 * 1 * (2-2.5)/0.6 * (0.75/0.25) = -5
  // row2: a=1, pi=0.5: 2 * 0.5 * (5-4)/0.8 * (0.2/0.8) = 0.3125
  // row3: 2 * (1*1 + 0*2) = 2
  // row4: 2 * (0.25*2.5 + 0.75*0.5) = 2
  // row5: 2 * (0*3.5 + 1*3) = 6
  const double expected = (4.0 - 5.0 + 0.3125 + 2.0 + 2.0 + 6.0) / 6.0;
  EXPECT_NEAR(estimate(coefficients_se_R(h.d, h.t), h.pi).value, expected, 1e-14);
  EXPECT_NEAR(formula_se_R(h.d, h.t, h.pi), expected, 1e-14);
}

TEST(SeV, ResidualFreeCaseAveragesRegressionsOverAllRows) {
  auto h = hand_six();
  h.d.outcome[0] = h.t.mu1(0);
  h.d.outcome[1] = h.t.mu0(1);
  h.d.outcome[2] = h.t.mu1(2);
  double expected = 0.0;
  for (int i = 0; i < 6; ++i) expected += h.pi(i) * h.t.mu1(i) + (1.0 - h.pi(i)) * h.t.mu0(i);
  expected /= 6.0;
  EXPECT_NEAR(estimate(coefficients_se_V(h.d, h.t), h.pi).value, expected, 1e-14);
}

TEST(SeV, SixRowHandSum) {
  const auto h = hand_six();
  // residual terms: row0 1/0.5 * 1*(1)/0.5 = 4; row1 1/0.25 * (-0.5)/0.6 = -10/3; row2 1/0.8 * 0.5*1/0.8 = 0.78125
  // regression terms: 2, 1.0*0+... computed per row below
  double reg = 0.0;
  for (int i = 0; i < 6; ++i) reg += h.pi(i) * h.t.mu1(i) + (1.0 - h.pi(i)) * h.t.mu0(i);
  const double expected = (4.0 - 10.0 / 3.0 + 0.78125 + reg) / 6.0;
  EXPECT_NEAR(estimate(coefficients_se_V(h.d, h.t), h.pi).value, expected, 1e-14);
}

TEST(SeV, SingleTargetRowStaysFinite) {
  CombinedDataset d;
  d.covariates = Eigen::MatrixXd::Zero(4, 1);
  d.group = {1, 1, 1, 0};
  d.treatment = {1, 0, 1, std::nullopt};
  d.outcome = {1e3, -2e3, 5.0, std::nullopt};
  const double q = d.source_fraction();
  const auto c = coefficients_se_V(d, constant_table(4, 0.0, 1.0, clip_probability(1e-9, 0.01), q));
  EXPECT_TRUE(std::isfinite(estimate(c, Eigen::Vector4d(1, 0, 1, 1)).value));
}

TEST(Coefficients, DomainSupportInvariants) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = testing::random_instance(rng);
    const auto direct = coefficients_direct_R(inst.data, inst.table);
    const auto ipw = coefficients_ipw_R(inst.data, inst.table);
    for (std::size_t i = 0; i < inst.data.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      if (inst.data.group[i] == 1) {
        EXPECT_EQ(direct.a(k), 0.0);
        EXPECT_EQ(direct.b(k), 0.0);
      } else {
        EXPECT_EQ(ipw.a(k), 0.0);
        EXPECT_EQ(ipw.b(k), 0.0);
      }
    }
  }
}

TEST(Coefficients, MatchTermByTermFormulas) {
  std::mt19937_64 rng(20240601);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = testing::random_instance(rng);
    const auto check = [&](const RewardCoefficients& c, double oracle) {
      const double v = estimate(c, inst.pi).value;
      EXPECT_LE(std::abs(v - oracle), 1e-12 * std::max(1.0, std::abs(oracle))) << to_string(c.kind);
    };
    check(coefficients_direct_R(inst.data, inst.table), formula_direct_R(inst.data, inst.table, inst.pi));
    check(coefficients_ipw_R(inst.data, inst.table), formula_ipw_R(inst.data, inst.table, inst.pi));
    check(coefficients_se_R(inst.data, inst.table), formula_se_R(inst.data, inst.table, inst.pi));
    check(coefficients_se_V(inst.data, inst.table), formula_se_V(inst.data, inst.table, inst.pi));
  }
}

TEST(Estimate, ConstantContributions) {
  RewardCoefficients c{Eigen::VectorXd::Zero(5), Eigen::VectorXd::Constant(5, 2.5), Estimand::RTarget, Estimator::SE};
  const auto r = estimate(c, Eigen::VectorXd::Constant(5, 0.3));
  EXPECT_DOUBLE_EQ(r.value, 2.5);
  ASSERT_TRUE(r.inference);
  EXPECT_EQ(r.inference->std_error, 0.0);
  EXPECT_EQ(r.inference->ci_low, 2.5);
}

TEST(Estimate, LinearInPolicy) {
  std::mt19937_64 rng(8);
  const auto inst = testing::random_instance(rng);
  const auto c = coefficients_se_R(inst.data, inst.table);
  const Eigen::VectorXd flipped = Eigen::VectorXd::Ones(inst.pi.size()) - inst.pi;
  const double delta = estimate(c, flipped).value - estimate(c, inst.pi).value;
  const double expected = -(c.a.cwiseProduct(2.0 * inst.pi - Eigen::VectorXd::Ones(inst.pi.size()))).mean();
  EXPECT_NEAR(delta, expected, 1e-12);
}

TEST(Estimate, InfluenceValuesCenteredAndStandardError) {
  std::mt19937_64 rng(9);
  const auto inst = testing::random_instance(rng);
  const auto r = estimate(coefficients_se_R(inst.data, inst.table), inst.pi);
  const auto n = static_cast<double>(inst.pi.size());
  EXPECT_NEAR(r.influence_values.mean(), 0.0, 1e-12);
  const double sd = std::sqrt(r.influence_values.squaredNorm() / (n - 1.0));
  EXPECT_NEAR(r.inference->std_error, sd / std::sqrt(n), 1e-14);
  EXPECT_NEAR(r.inference->ci_high - r.value, 1.959964 * r.inference->std_error, 1e-14);
  EXPECT_FALSE(estimate(coefficients_ipw_R(inst.data, inst.table), inst.pi).inference.has_value());
}

TEST(Estimate, LengthMismatchThrows) {
  RewardCoefficients c{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3), Estimand::RTarget, Estimator::SE};
  EXPECT_THROW(estimate(c, Eigen::VectorXd::Zero(4)), std::invalid_argument);
}

TEST(BiasDiagnostic, ZeroWhenFittedEqualsTruth) {
  std::mt19937_64 rng(12);
  const auto inst = testing::random_instance(rng);
  EXPECT_EQ(bias_diagnostic(inst.data, inst.table, inst.table, inst.pi), 0.0);
}

TEST(BiasDiagnostic, ZeroWhenEitherFactorIsExact) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto truth = testing::random_instance(rng);
    const auto other = testing::random_instance(rng);
    const auto n = truth.table.size();
    // Exact regressions, arbitrary scores.
    NuisanceTable fitted = truth.table;
    for (Eigen::Index i = 0; i < n; ++i) {
      fitted.e1(i) = 0.05 + 0.9 * std::abs(std::sin(static_cast<double>(i + trial)));
      fitted.s(i) = 0.05 + 0.9 * std::abs(std::cos(static_cast<double>(3 * i + trial)));
    }
    EXPECT_EQ(bias_diagnostic(truth.data, truth.table, fitted, truth.pi), 0.0);
    // Exact scores, arbitrary regressions.
    fitted = truth.table;
    fitted.mu0 = other.table.mu0.head(std::min(n, other.table.size()));
    fitted.mu0.conservativeResize(n);
    fitted.mu0.tail(n - std::min(n, other.table.size())).setConstant(-4.0);
    fitted.mu1 = truth.table.mu1.array() + 3.0;
    EXPECT_NEAR(bias_diagnostic(truth.data, truth.table, fitted, truth.pi), 0.0, 1e-12);
  }
}

TEST(GeneralizationBound, ZeroForPerfectFit) {
  auto h = hand_six();
  h.d.outcome[0] = h.t.mu1(0);
  h.d.outcome[1] = h.t.mu0(1);
  h.d.outcome[2] = h.t.mu1(2);
  EXPECT_EQ(generalization_bound(h.d, h.t, 0.05, 100).bound_term, 0.0);
  EXPECT_GT(generalization_bound(hand_six().d, h.t, 0.05, 100).bound_term, 0.0);
}

TEST(GeneralizationBound, ScalesWithLogClassSize) {
  const auto h = hand_six();
  const double b1 = generalization_bound(h.d, h.t, 0.05, 100).bound_term;
  const double b2 = generalization_bound(h.d, h.t, 0.05, 200).bound_term;
  EXPECT_NEAR(b2 / b1, std::sqrt(std::log(2.0 * 200 / 0.05) / std::log(2.0 * 100 / 0.05)), 1e-14);
}

TEST(GeneralizationBound, TwoSourceRowHandValue) {
  CombinedDataset d;
  d.covariates = Eigen::MatrixXd::Zero(4, 1);
  d.group = {1, 1, 0, 0};
  d.treatment = {1, 0, std::nullopt, std::nullopt};
  d.outcome = {3.0, -1.0, std::nullopt, std::nullopt};
  NuisanceTable t = constant_table(4, 0.0, 1.0, 0.6, 0.5);
  t.s(1) = 0.25;
  // row0: resid 2, e = 0.6, s = 0.5: 4 * 0.25 / (0.25 * 0.36 * 0.25) = 44.444...
  // row1: resid -1, e = 0.4, s = 0.25: 1 * 0.5625 / (0.25 * 0.16 * 0.0625) = 225
  const double sum = 4.0 * 0.25 / (0.25 * 0.36 * 0.25) + 0.5625 / (0.25 * 0.16 * 0.0625);
  const double expected = std::sqrt(std::log(2.0 * 100 / 0.05) / (2.0 * 16.0) * sum);
  const auto b = generalization_bound(d, t, 0.05, 100);
  EXPECT_NEAR(b.bound_term, expected, 1e-12);
  EXPECT_NEAR(b.bound_term, 8.35686, 1e-5);
}

TEST(GeneralizationBound, RejectsBadArguments) {
  const auto h = hand_six();
  EXPECT_THROW(generalization_bound(h.d, h.t, 0.0, 10), std::invalid_argument);
  EXPECT_THROW(generalization_bound(h.d, h.t, 1.0, 10), std::invalid_argument);
  EXPECT_THROW(generalization_bound(h.d, h.t, 0.1, 0.5), std::invalid_argument);
}

}  // namespace
}  // namespace covshift
