#pragma once

// Nuisance functions: outcome regressions mu0/mu1 (ridge least squares),
// propensity e1 and sampling score s (ridge-penalized logistic regression fit
// by IRLS), probability clipping and optional K-fold cross-fitting.

#include "covshift/dataset.hpp"
#include "covshift/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace covshift {

class NuisanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct LinearModel {
  FeatureMap map;
  Eigen::VectorXd beta;

  [[nodiscard]] double operator()(const Eigen::VectorXd& x) const { return beta.dot(map(x)); }
};

struct LogisticModel {
  FeatureMap map;
  Eigen::VectorXd beta;

  [[nodiscard]] double linear_predictor(const Eigen::VectorXd& x) const { return beta.dot(map(x)); }
  [[nodiscard]] double operator()(const Eigen::VectorXd& x) const { return sigmoid(linear_predictor(x)); }
};

namespace detail {

inline Eigen::MatrixXd intercept_free_penalty(Eigen::Index p, double ridge) {
  Eigen::MatrixXd pen = Eigen::MatrixXd::Identity(p, p) * ridge;
  pen(0, 0) = 0.0;
  return pen;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

inline Eigen::MatrixXd select_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(rows[k]));
  return out;
}

}  // namespace detail

/// Ridge least squares with an unpenalized intercept:
/// beta = (F'F + ridge * I0)^-1 F'y, where I0 zeroes the intercept entry.
inline LinearModel fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const FeatureMap& map,
                             double ridge) {
  if (ridge < 0.0 || !std::isfinite(ridge)) throw std::invalid_argument("ridge must be a finite nonnegative number");
  if (x.rows() != y.size()) throw std::invalid_argument("fit_ridge: row count mismatch");
  const Eigen::Index p = map.p_out();
  if (x.rows() < p) {
    throw NuisanceError("insufficient rows for regression: have " + std::to_string(x.rows()) + ", need at least " +
                        std::to_string(p));
  }
  const Eigen::MatrixXd f = map.design(x);
  const Eigen::MatrixXd normal = f.transpose() * f + detail::intercept_free_penalty(p, ridge);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(normal);
  if (qr.rank() < p) throw NuisanceError("singular normal equations; use a positive ridge penalty");
  return LinearModel{map, qr.solve(f.transpose() * y)};
}

/// Outcome regression mu_arm, fit on source rows with treatment == arm.
/// `rows` restricts the candidate rows (used by cross-fitting).
inline LinearModel fit_outcome(const CombinedDataset& d, int arm, const FeatureMap& map, double ridge,
                               std::optional<std::span<const std::size_t>> rows = std::nullopt) {
  const auto candidates = rows ? std::vector<std::size_t>(rows->begin(), rows->end()) : detail::all_rows(d.size());
  std::vector<std::size_t> use;
  for (auto i : candidates)
    if (d.is_source(i) && d.treatment[i] && *d.treatment[i] == arm) use.push_back(i);
  Eigen::VectorXd y(static_cast<Eigen::Index>(use.size()));
  for (std::size_t k = 0; k < use.size(); ++k) y(static_cast<Eigen::Index>(k)) = *d.outcome[use[k]];
  return fit_ridge(detail::select_rows(d.covariates, use), y, map, ridge);
}

struct LogisticOptions {
  double ridge = 1e-2;
  int max_iter = 100;
  double tol = 1e-8;
};

struct LogisticFit {
  LogisticModel model;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // penalized objective after each accepted step
};

/// Penalized objective: mean Bernoulli log-likelihood minus (ridge/2)*|beta_-0|^2.
/// The likelihood enters as a mean, so replicating every row leaves the fit unchanged.
inline double logistic_objective(const Eigen::MatrixXd& f, std::span<const int> labels, const Eigen::VectorXd& beta,
                                 double ridge) {
  const Eigen::VectorXd eta = f * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double z = eta(i);
    // log(1 + exp(z)) computed without overflow
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    ll += labels[static_cast<std::size_t>(i)] * z - softplus;
  }
  ll /= static_cast<double>(eta.size());
  return ll - 0.5 * ridge * beta.tail(beta.size() - 1).squaredNorm();
}

inline LogisticFit fit_logistic(std::span<const int> labels, const Eigen::MatrixXd& x, const FeatureMap& map,
                                const LogisticOptions& opt = {}) {
  if (opt.ridge < 0.0 || !std::isfinite(opt.ridge)) throw std::invalid_argument("ridge must be a finite nonnegative number");
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) throw std::invalid_argument("fit_logistic: row count mismatch");
  std::size_t ones = 0;
  for (int v : labels) {
    if (v != 0 && v != 1) throw std::invalid_argument("fit_logistic: labels must be 0/1");
    ones += static_cast<std::size_t>(v);
  }
  if (ones == 0 || ones == labels.size()) throw NuisanceError("logistic fit needs both classes in the labels");

  const Eigen::MatrixXd f = map.design(x);
  const Eigen::Index p = f.cols();
  const double n = static_cast<double>(f.rows());
  const Eigen::MatrixXd pen = detail::intercept_free_penalty(p, opt.ridge);
  Eigen::VectorXd yv(f.rows());
  for (Eigen::Index i = 0; i < f.rows(); ++i) yv(i) = labels[static_cast<std::size_t>(i)];

  LogisticFit fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  const double mean_label = static_cast<double>(ones) / n;
  beta(0) = logit(mean_label);
  double obj = logistic_objective(f, labels, beta, opt.ridge);

  for (int it = 0; it < opt.max_iter; ++it) {
    Eigen::VectorXd prob(f.rows());
    Eigen::VectorXd w(f.rows());
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      prob(i) = sigmoid(f.row(i).dot(beta));
      w(i) = prob(i) * (1.0 - prob(i));
    }
    const Eigen::VectorXd grad = f.transpose() * (yv - prob) / n - pen * beta;
    const Eigen::MatrixXd hess = f.transpose() * w.asDiagonal() * f / n + pen;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw NuisanceError("logistic Hessian is singular (perfect separation?); use a positive ridge penalty");
    }
    Eigen::VectorXd step = ldlt.solve(grad);
    if (!step.allFinite()) throw NuisanceError("non-finite IRLS step (perfect separation?); use a positive ridge penalty");

    // Step-halving keeps the penalized objective non-decreasing, up to
    // rounding so that Newton can still polish near the optimum.
    const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(obj));
    double step_scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double cand_obj = logistic_objective(f, labels, candidate, opt.ridge);
    int halvings = 0;
    while (!(cand_obj >= obj - slack) && halvings < 30) {
      step_scale *= 0.5;
      candidate = beta + step_scale * step;
      cand_obj = logistic_objective(f, labels, candidate, opt.ridge);
      ++halvings;
    }
    if (!(cand_obj >= obj - slack)) {
      // No ascent direction left at working precision.
      fit.converged = true;
      fit.iterations = it;
      break;
    }
    const double change = (step_scale * step).cwiseAbs().maxCoeff();
    if (cand_obj < obj) {
      // Flat to rounding: keep the polished point and stop.
      beta = candidate;
      fit.converged = true;
      fit.iterations = it + 1;
      break;
    }
    beta = candidate;
    obj = cand_obj;
    fit.objective_trace.push_back(obj);
    fit.iterations = it + 1;
    if (change < opt.tol) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged && opt.ridge == 0.0) {
    throw NuisanceError("IRLS did not converge without penalty (perfect separation?); use a positive ridge penalty");
  }
  fit.model = LogisticModel{map, beta};
  return fit;
}

inline LogisticFit fit_propensity(const CombinedDataset& d, const FeatureMap& map, const LogisticOptions& opt = {},
                                  std::optional<std::span<const std::size_t>> rows = std::nullopt) {
  const auto candidates = rows ? std::vector<std::size_t>(rows->begin(), rows->end()) : detail::all_rows(d.size());
  std::vector<std::size_t> use;
  std::vector<int> labels;
  for (auto i : candidates) {
    if (!d.is_source(i)) continue;
    use.push_back(i);
    labels.push_back(*d.treatment[i]);
  }
  return fit_logistic(labels, detail::select_rows(d.covariates, use), map, opt);
}

inline LogisticFit fit_sampling_score(const CombinedDataset& d, const FeatureMap& map, const LogisticOptions& opt = {},
                                      std::optional<std::span<const std::size_t>> rows = std::nullopt) {
  const auto use = rows ? std::vector<std::size_t>(rows->begin(), rows->end()) : detail::all_rows(d.size());
  std::vector<int> labels;
  labels.reserve(use.size());
  for (auto i : use) labels.push_back(d.group[i]);
  return fit_logistic(labels, detail::select_rows(d.covariates, use), map, opt);
}

struct NuisanceValues {
  double mu0 = 0.0;
  double mu1 = 0.0;
  double e1 = 0.5;
  double s = 0.5;
};

/// Four nuisance functions. Fitted sets also carry the underlying models so
/// reports can record the coefficients.
struct NuisanceFunctions {
  using Fn = std::function<double(const Eigen::VectorXd&)>;
  Fn mu0;
  Fn mu1;
  Fn e1;
  Fn s;
};

struct FittedModels {
  LinearModel mu0;
  LinearModel mu1;
  LogisticModel e1;
  LogisticModel s;
};

inline NuisanceFunctions as_functions(const FittedModels& m) {
  return {[f = m.mu0](const Eigen::VectorXd& x) { return f(x); },
          [f = m.mu1](const Eigen::VectorXd& x) { return f(x); },
          [f = m.e1](const Eigen::VectorXd& x) { return f(x); },
          [f = m.s](const Eigen::VectorXd& x) { return f(x); }};
}

struct NuisanceSet {
  NuisanceFunctions full;
  double clip = 0.01;
  // Cross-fitting: held_out[k] was fit without fold k; fold_of_row maps
  // training rows to folds. Empty when cross-fitting is off.
  std::vector<NuisanceFunctions> held_out;
  std::vector<int> fold_of_row;
  std::optional<FittedModels> models;  // full-data fitted models, if fitted

  [[nodiscard]] bool cross_fitted() const { return !held_out.empty(); }
};

inline double clip_probability(double p, double eps) { return std::clamp(p, eps, 1.0 - eps); }

namespace detail {
inline NuisanceValues evaluate(const NuisanceFunctions& f, const Eigen::VectorXd& x, double clip) {
  return {f.mu0(x), f.mu1(x), clip_probability(f.e1(x), clip), clip_probability(f.s(x), clip)};
}
}  // namespace detail

/// Prediction at an arbitrary covariate vector, from the full-data models.
inline NuisanceValues predict_clipped(const NuisanceSet& ns, const Eigen::VectorXd& x) {
  return detail::evaluate(ns.full, x, ns.clip);
}

/// Prediction at training row `row`; under cross-fitting this comes from the
/// model that did not see the row's fold.
inline NuisanceValues predict_clipped(const NuisanceSet& ns, const CombinedDataset& d, std::size_t row) {
  const Eigen::VectorXd x = d.row(row);
  if (ns.cross_fitted() && row < ns.fold_of_row.size()) {
    return detail::evaluate(ns.held_out[static_cast<std::size_t>(ns.fold_of_row[row])], x, ns.clip);
  }
  return detail::evaluate(ns.full, x, ns.clip);
}

/// Per-row nuisance values over a dataset (clipped probabilities).
struct NuisanceTable {
  Eigen::VectorXd mu0;
  Eigen::VectorXd mu1;
  Eigen::VectorXd e1;
  Eigen::VectorXd s;

  [[nodiscard]] Eigen::Index size() const { return mu0.size(); }
};

inline NuisanceTable evaluate_table(const NuisanceSet& ns, const CombinedDataset& d) {
  const auto n = static_cast<Eigen::Index>(d.size());
  NuisanceTable t{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto v = predict_clipped(ns, d, static_cast<std::size_t>(i));
    t.mu0(i) = v.mu0;
    t.mu1(i) = v.mu1;
    t.e1(i) = v.e1;
    t.s(i) = v.s;
  }
  return t;
}

struct NuisanceConfig {
  FeatureKind outcome_map = FeatureKind::Quadratic;
  FeatureKind propensity_map = FeatureKind::Raw;
  FeatureKind sampling_map = FeatureKind::Quadratic;
  bool standardize = true;
  double outcome_ridge = 1e-4;
  LogisticOptions logistic{};
  double clip = 0.01;
  int folds = 1;  // 1 = no cross-fitting
  // An arm with fewer than two rows per outcome coefficient is fitted with
  // the next coarser map (quadratic -> raw -> intercept).
  bool coarsen_sparse_arms = true;
};

namespace detail {

inline FittedModels fit_models(const CombinedDataset& d, const NuisanceConfig& cfg, std::span<const std::size_t> rows) {
  const auto p = static_cast<Eigen::Index>(d.dim());
  auto make_map = [&](FeatureKind k) {
    FeatureMap m(k, p);
    return cfg.standardize ? m.standardized_on(select_rows(d.covariates, rows)) : m;
  };
  auto arm_map = [&](int arm) {
    FeatureKind kind = cfg.outcome_map;
    if (cfg.coarsen_sparse_arms) {
      Eigen::Index count = 0;
      for (auto i : rows)
        if (d.is_source(i) && d.treatment[i] && *d.treatment[i] == arm) ++count;
      while (kind != FeatureKind::Intercept && count < 2 * FeatureMap::output_dim(kind, p))
        kind = kind == FeatureKind::Quadratic ? FeatureKind::Raw : FeatureKind::Intercept;
    }
    return make_map(kind);
  };
  FittedModels m;
  m.mu0 = fit_outcome(d, 0, arm_map(0), cfg.outcome_ridge, rows);
  m.mu1 = fit_outcome(d, 1, arm_map(1), cfg.outcome_ridge, rows);
  m.e1 = fit_propensity(d, make_map(cfg.propensity_map), cfg.logistic, rows).model;
  m.s = fit_sampling_score(d, make_map(cfg.sampling_map), cfg.logistic, rows).model;
  return m;
}

}  // namespace detail

/// Fits all four nuisances. With cfg.folds >= 2, row i is assigned to fold
/// i mod K and each fold gets models trained on the remaining folds.
inline NuisanceSet fit_nuisances(const CombinedDataset& d, const NuisanceConfig& cfg) {
  if (!(cfg.clip > 0.0 && cfg.clip < 0.5)) throw std::invalid_argument("clip must lie in (0, 0.5)");
  if (cfg.folds < 1) throw std::invalid_argument("folds must be >= 1");
  require_valid(d);
  NuisanceSet ns;
  ns.clip = cfg.clip;
  const auto all = detail::all_rows(d.size());
  ns.models = detail::fit_models(d, cfg, all);
  ns.full = as_functions(*ns.models);
  if (cfg.folds >= 2) {
    const auto k_folds = static_cast<std::size_t>(cfg.folds);
    ns.fold_of_row.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) ns.fold_of_row[i] = static_cast<int>(i % k_folds);
    for (std::size_t k = 0; k < k_folds; ++k) {
      std::vector<std::size_t> train;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (i % k_folds != k) train.push_back(i);
      ns.held_out.push_back(as_functions(detail::fit_models(d, cfg, train)));
    }
  }
  return ns;
}

}  // namespace covshift
