#pragma once

#include "covshift/estimators.hpp"
#include "covshift/features.hpp"
#include "covshift/nuisance.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace covshift {

/// Linear-logistic policy: smooth value sigmoid(theta . f(x) / T), hard
/// decision 1 iff theta . f(x) >= 0.
struct Policy {
  FeatureMap map;
  Eigen::VectorXd theta;
  double temperature = 1.0;

  [[nodiscard]] double score(const Eigen::VectorXd& x) const { return theta.dot(map(x)); }
  [[nodiscard]] double smooth_value(const Eigen::VectorXd& x) const { return sigmoid(score(x) / temperature); }
  [[nodiscard]] int hard_value(const Eigen::VectorXd& x) const { return score(x) >= 0.0 ? 1 : 0; }

  [[nodiscard]] Eigen::VectorXd hard_values(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = hard_value(x.row(i).transpose());
    return out;
  }
};

/// Treat iff the conditional effect is nonnegative (ties treat).
inline int oracle_decision(double cate_value) {
  if (!std::isfinite(cate_value)) throw std::invalid_argument("oracle_decision: non-finite CATE value");
  return cate_value >= 0.0 ? 1 : 0;
}

struct OraclePolicy {
  std::function<double(const Eigen::VectorXd&)> cate;

  [[nodiscard]] int decision(const Eigen::VectorXd& x) const { return oracle_decision(cate(x)); }
  [[nodiscard]] Eigen::VectorXd decisions(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = decision(x.row(i).transpose());
    return out;
  }
};

struct LearnerConfig {
  std::size_t batch_size = 128;
  double step_size = 0.05;
  int max_epochs = 500;
  double temperature = 1.0;
  double final_temperature = 1.0;  // geometric annealing from temperature to this
  std::uint64_t seed = 0;
  FeatureKind map = FeatureKind::Raw;
  bool standardize = true;
  // Divide the coefficients by mean|a| before the ascent. A positive rescaling
  // of the objective leaves its argmax unchanged.
  bool normalize_coefficients = true;
  std::optional<Eigen::VectorXd> init;
};

struct LearnResult {
  Policy policy;
  std::vector<double> trace;  // full-data smoothed objective after each epoch
  double initial_objective = 0.0;
  double best_objective = 0.0;
  int best_epoch = 0;  // 0 = initialization
};

class LearnerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Smoothed objective mean_i[sigmoid(theta . f_i / T) a_i + b_i].
inline double smoothed_objective(const RewardCoefficients& c, const Eigen::MatrixXd& features,
                                 const Eigen::VectorXd& theta, double temperature) {
  const Eigen::VectorXd z = features * theta / temperature;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) sum += sigmoid(z(i)) * c.a(i) + c.b(i);
  return sum / static_cast<double>(z.size());
}

/// Mini-batch gradient ascent on the smoothed estimated reward. Returns the
/// parameters from the epoch with the best full-data smoothed objective.
inline LearnResult learn_policy(const RewardCoefficients& c, const Eigen::MatrixXd& covariates,
                                const LearnerConfig& cfg = {}) {
  const auto n = static_cast<std::size_t>(covariates.rows());
  if (static_cast<Eigen::Index>(n) != c.size()) throw std::invalid_argument("learn_policy: coefficients and covariates misaligned");
  if (n == 0) throw std::invalid_argument("learn_policy: empty data");
  if (cfg.batch_size == 0 || cfg.batch_size > n) throw std::invalid_argument("learn_policy: batch_size must be in [1, n]");
  if (!(cfg.step_size > 0.0)) throw std::invalid_argument("learn_policy: step_size must be positive");
  if (!(cfg.temperature > 0.0 && cfg.final_temperature > 0.0)) throw std::invalid_argument("learn_policy: temperatures must be positive");
  if (cfg.max_epochs < 0) throw std::invalid_argument("learn_policy: max_epochs must be >= 0");

  FeatureMap map(cfg.map, covariates.cols());
  if (cfg.standardize) map = map.standardized_on(covariates);
  const Eigen::MatrixXd f = map.design(covariates);
  const Eigen::Index p = f.cols();

  double scale = 1.0;
  if (cfg.normalize_coefficients) {
    const double m = c.a.cwiseAbs().mean();
    if (m > 0.0 && std::isfinite(m)) scale = m;
  }
  const Eigen::VectorXd a = c.a / scale;

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  if (cfg.init) {
    if (cfg.init->size() != p) throw std::invalid_argument("learn_policy: init has wrong dimension");
    theta = *cfg.init;
  }

  const double t_final = cfg.final_temperature;
  auto temperature_at = [&](int epoch) {
    if (cfg.max_epochs <= 1 || cfg.temperature == t_final) return cfg.temperature;
    const double frac = static_cast<double>(epoch) / static_cast<double>(cfg.max_epochs - 1);
    return cfg.temperature * std::pow(t_final / cfg.temperature, frac);
  };

  LearnResult res;
  res.initial_objective = smoothed_objective(c, f, theta, t_final);
  res.best_objective = res.initial_objective;
  Eigen::VectorXd best_theta = theta;

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::VectorXd grad(p);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double temp = temperature_at(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      grad.setZero();
      for (std::size_t k = start; k < stop; ++k) {
        const auto i = static_cast<Eigen::Index>(order[k]);
        const double sg = sigmoid(f.row(i).dot(theta) / temp);
        grad += (a(i) * sg * (1.0 - sg) / temp) * f.row(i).transpose();
      }
      grad /= static_cast<double>(stop - start);
      if (!grad.allFinite()) throw LearnerError("non-finite policy gradient (check reward coefficients)");
      theta += cfg.step_size * grad;
    }
    const double obj = smoothed_objective(c, f, theta, t_final);
    res.trace.push_back(obj);
    if (obj > res.best_objective) {
      res.best_objective = obj;
      res.best_epoch = epoch + 1;
      best_theta = theta;
    }
  }
  res.policy = Policy{map, best_theta, t_final};
  return res;
}

/// Disagreement rate between two 0/1 decision vectors.
inline double disagreement_rate(const Eigen::VectorXd& lhs, const Eigen::VectorXd& rhs) {
  if (lhs.size() != rhs.size()) throw std::invalid_argument("disagreement_rate: length mismatch");
  if (lhs.size() == 0) throw std::invalid_argument("disagreement_rate: empty input");
  return (lhs - rhs).squaredNorm() / static_cast<double>(lhs.size());
}

/// Mean squared disagreement between the policy's hard decisions and the
/// oracle's over the target covariates.
inline double policy_error(const Policy& policy, const OraclePolicy& oracle, const Eigen::MatrixXd& target_covariates) {
  if (target_covariates.rows() == 0) throw std::invalid_argument("policy_error: empty target set");
  return disagreement_rate(policy.hard_values(target_covariates), oracle.decisions(target_covariates));
}

}  // namespace covshift
