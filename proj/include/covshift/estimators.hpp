#pragma once

// Reward estimators written as a per-row linear decomposition: every estimate
// is mean_i[pi_i * a_i + b_i], with (a_i, b_i) independent of the policy. The
// learner optimizes the same coefficients the evaluator reports on.

#include "covshift/dataset.hpp"
#include "covshift/nuisance.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace covshift {

enum class Estimator { Direct, IPW, SE };
enum class Estimand { RTarget, VEntire };

inline std::string to_string(Estimator k) {
  switch (k) {
    case Estimator::Direct: return "direct";
    case Estimator::IPW: return "ipw";
    case Estimator::SE: return "se";
  }
  return "?";
}

inline std::string to_string(Estimand e) { return e == Estimand::RTarget ? "r" : "v"; }

inline Estimator estimator_from_string(const std::string& s) {
  if (s == "direct") return Estimator::Direct;
  if (s == "ipw") return Estimator::IPW;
  if (s == "se") return Estimator::SE;
  throw std::invalid_argument("unknown method '" + s + "' (expected direct|ipw|se)");
}

inline Estimand estimand_from_string(const std::string& s) {
  if (s == "r") return Estimand::RTarget;
  if (s == "v") return Estimand::VEntire;
  throw std::invalid_argument("unknown estimand '" + s + "' (expected r|v)");
}

struct RewardCoefficients {
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  Estimand estimand = Estimand::RTarget;
  Estimator kind = Estimator::SE;

  [[nodiscard]] Eigen::Index size() const { return a.size(); }
};

namespace detail {

inline void check_table(const CombinedDataset& d, const NuisanceTable& t) {
  if (t.size() != static_cast<Eigen::Index>(d.size())) throw std::invalid_argument("nuisance table size differs from dataset");
}

// Source-row residual terms of the SE estimators, split into the part that
// multiplies pi (on) and the part that multiplies 1 - pi (off).
struct ResidualTerms {
  double on = 0.0;
  double off = 0.0;
};

inline ResidualTerms residual_terms(const CombinedDataset& d, const NuisanceTable& t, Eigen::Index i, double weight) {
  const auto row = static_cast<std::size_t>(i);
  const int a = *d.treatment[row];
  const double y = *d.outcome[row];
  ResidualTerms r;
  if (a == 1) r.on = weight * (y - t.mu1(i)) / t.e1(i);
  else r.off = weight * (y - t.mu0(i)) / (1.0 - t.e1(i));
  return r;
}

}  // namespace detail

/// Direct: target rows carry (mu1 - mu0)/(1-q) and mu0/(1-q); source rows 0.
inline RewardCoefficients coefficients_direct_R(const CombinedDataset& d, const NuisanceTable& t) {
  detail::check_table(d, t);
  const auto n = static_cast<Eigen::Index>(d.size());
  const double q = d.source_fraction();
  RewardCoefficients c{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Estimand::RTarget, Estimator::Direct};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d.is_source(static_cast<std::size_t>(i))) continue;
    c.a(i) = (t.mu1(i) - t.mu0(i)) / (1.0 - q);
    c.b(i) = t.mu0(i) / (1.0 - q);
  }
  return c;
}

/// IPW: source rows weighted by w = (1 - s)/s and the inverse propensity.
inline RewardCoefficients coefficients_ipw_R(const CombinedDataset& d, const NuisanceTable& t) {
  detail::check_table(d, t);
  const auto n = static_cast<Eigen::Index>(d.size());
  const double q = d.source_fraction();
  RewardCoefficients c{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Estimand::RTarget, Estimator::IPW};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    if (!d.is_source(row)) continue;
    const double w = (1.0 - t.s(i)) / t.s(i);
    const int a = *d.treatment[row];
    const double y = *d.outcome[row];
    const double on = a == 1 ? y * w / (t.e1(i) * (1.0 - q)) : 0.0;
    const double off = a == 0 ? y * w / ((1.0 - t.e1(i)) * (1.0 - q)) : 0.0;
    c.a(i) = on - off;
    c.b(i) = off;
  }
  return c;
}

/// Semiparametric efficient estimator of the target reward R(pi).
inline RewardCoefficients coefficients_se_R(const CombinedDataset& d, const NuisanceTable& t) {
  detail::check_table(d, t);
  const auto n = static_cast<Eigen::Index>(d.size());
  const double q = d.source_fraction();
  RewardCoefficients c{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Estimand::RTarget, Estimator::SE};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d.is_source(static_cast<std::size_t>(i))) {
      const double w = (1.0 - t.s(i)) / (t.s(i) * (1.0 - q));
      const auto r = detail::residual_terms(d, t, i, w);
      c.a(i) = r.on - r.off;
      c.b(i) = r.off;
    } else {
      c.a(i) = (t.mu1(i) - t.mu0(i)) / (1.0 - q);
      c.b(i) = t.mu0(i) / (1.0 - q);
    }
  }
  return c;
}

/// Semiparametric efficient estimator of the whole-population reward V(pi).
inline RewardCoefficients coefficients_se_V(const CombinedDataset& d, const NuisanceTable& t) {
  detail::check_table(d, t);
  const auto n = static_cast<Eigen::Index>(d.size());
  RewardCoefficients c{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Estimand::VEntire, Estimator::SE};
  for (Eigen::Index i = 0; i < n; ++i) {
    c.a(i) = t.mu1(i) - t.mu0(i);
    c.b(i) = t.mu0(i);
    if (d.is_source(static_cast<std::size_t>(i))) {
      const auto r = detail::residual_terms(d, t, i, 1.0 / t.s(i));
      c.a(i) += r.on - r.off;
      c.b(i) += r.off;
    }
  }
  return c;
}

inline RewardCoefficients coefficients(Estimator kind, Estimand estimand, const CombinedDataset& d,
                                       const NuisanceTable& t) {
  if (estimand == Estimand::VEntire) {
    if (kind != Estimator::SE) throw std::invalid_argument("V(pi) is only available with the se estimator");
    return coefficients_se_V(d, t);
  }
  switch (kind) {
    case Estimator::Direct: return coefficients_direct_R(d, t);
    case Estimator::IPW: return coefficients_ipw_R(d, t);
    case Estimator::SE: return coefficients_se_R(d, t);
  }
  throw std::invalid_argument("unknown estimator");
}

inline RewardCoefficients coefficients(Estimator kind, Estimand estimand, const CombinedDataset& d,
                                       const NuisanceSet& ns) {
  return coefficients(kind, estimand, d, evaluate_table(ns, d));
}

inline constexpr double kNormalQuantile975 = 1.959964;

struct Inference {
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct RewardEstimate {
  double value = 0.0;
  Eigen::VectorXd influence_values;  // SE only
  std::optional<Inference> inference; // SE only, 95% normal interval
  Estimator kind = Estimator::SE;
  Estimand estimand = Estimand::RTarget;
};

inline Eigen::VectorXd contributions(const RewardCoefficients& c, const Eigen::VectorXd& policy_values) {
  if (policy_values.size() != c.size()) {
    throw std::invalid_argument("policy values length " + std::to_string(policy_values.size()) +
                                " differs from coefficient length " + std::to_string(c.size()));
  }
  return policy_values.cwiseProduct(c.a) + c.b;
}

inline RewardEstimate estimate(const RewardCoefficients& c, const Eigen::VectorXd& policy_values) {
  const Eigen::VectorXd contrib = contributions(c, policy_values);
  RewardEstimate r;
  r.kind = c.kind;
  r.estimand = c.estimand;
  r.value = contrib.mean();
  if (c.kind == Estimator::SE) {
    r.influence_values = contrib.array() - r.value;
    const auto n = static_cast<double>(contrib.size());
    const double sd = n > 1 ? std::sqrt(r.influence_values.squaredNorm() / (n - 1.0)) : 0.0;
    const double se = sd / std::sqrt(n);
    r.inference = Inference{se, r.value - kNormalQuantile975 * se, r.value + kNormalQuantile975 * se};
  }
  return r;
}

/// Signed bias expression of the SE estimator of R(pi), evaluated as a sample
/// average over all rows given the true and fitted nuisances.
inline double bias_signed(const CombinedDataset& d, const NuisanceTable& truth, const NuisanceTable& fitted,
                          const Eigen::VectorXd& policy_values) {
  detail::check_table(d, truth);
  detail::check_table(d, fitted);
  if (policy_values.size() != truth.size()) throw std::invalid_argument("policy values length mismatch");
  const double q = d.source_fraction();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const double s = truth.s(i);
    const double sh = fitted.s(i);
    const double e1 = truth.e1(i);
    const double eh1 = fitted.e1(i);
    const double e0 = 1.0 - e1;
    const double eh0 = 1.0 - eh1;
    const double pi = policy_values(i);
    const double treated = pi * (truth.mu1(i) - fitted.mu1(i)) / (1.0 - q) *
                           ((s * e1 * (1.0 - sh) - sh * eh1 * (1.0 - s)) / (eh1 * sh));
    const double control = (1.0 - pi) * (truth.mu0(i) - fitted.mu0(i)) / (1.0 - q) *
                           ((s * e0 * (1.0 - sh) - sh * eh0 * (1.0 - s)) / (eh0 * sh));
    sum += treated + control;
  }
  return sum / static_cast<double>(truth.size());
}

inline double bias_diagnostic(const CombinedDataset& d, const NuisanceTable& truth, const NuisanceTable& fitted,
                              const Eigen::VectorXd& policy_values) {
  return std::abs(bias_signed(d, truth, fitted, policy_values));
}

struct BoundReport {
  double eta = 0.05;
  double policy_class_size = 1.0;
  double bound_term = 0.0;
  std::optional<double> bias_diagnostic;
};

/// Default size of a continuous linear policy class: 10^p_out grid points.
inline double default_policy_class_size(Eigen::Index p_out) { return std::pow(10.0, static_cast<double>(p_out)); }

/// Concentration term of the generalization bound for the SE-learned policy.
/// The residual sum runs over source rows; target rows have no outcome.
inline BoundReport generalization_bound(const CombinedDataset& d, const NuisanceTable& t, double eta,
                                        double policy_class_size) {
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
  if (!(policy_class_size >= 1.0)) throw std::invalid_argument("policy class size must be >= 1");
  detail::check_table(d, t);
  const double q = d.source_fraction();
  const auto n = static_cast<double>(d.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const auto row = static_cast<std::size_t>(i);
    if (!d.is_source(row)) continue;
    const int a = *d.treatment[row];
    const double mu = a == 1 ? t.mu1(i) : t.mu0(i);
    const double e = a == 1 ? t.e1(i) : 1.0 - t.e1(i);
    const double resid = *d.outcome[row] - mu;
    const double num = resid * resid * (1.0 - t.s(i)) * (1.0 - t.s(i));
    const double den = (1.0 - q) * (1.0 - q) * e * e * t.s(i) * t.s(i);
    sum += num / den;
  }
  BoundReport r;
  r.eta = eta;
  r.policy_class_size = policy_class_size;
  r.bound_term = std::sqrt(std::log(2.0 * policy_class_size / eta) / (2.0 * n * n) * sum);
  return r;
}

}  // namespace covshift
