#pragma once

// Simulated source/target study with three Gaussian covariates, a nonlinear
// covariate transform, and known nuisance functions.

#include "covshift/dataset.hpp"
#include "covshift/nuisance.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace covshift {

/// Matrix with (i,j) entry 2^(-|i-j| + offset).
inline Eigen::Matrix3d banded_covariance(double offset) {
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = std::pow(2.0, -std::abs(i - j) + offset);
  return m;
}

struct SimConfig {
  int n_source = 512;
  int n_target = 2048;
  Eigen::Vector3d mu_source{10.0, 3.0, 7.0};
  Eigen::Vector3d mu_target{9.0, 4.0, 6.0};
  Eigen::Matrix3d cov_source = banded_covariance(0.0);
  Eigen::Matrix3d cov_target = banded_covariance(1.0);
  double beta_treatment = 0.0;  // A ~ Bern(sigmoid(-beta * xt_2)); 0 gives Bern(0.5)
  double noise_sd = 1.0;
  bool shared_noise = true;
  std::uint64_t seed = 0;
};

/// Componentwise x * |x|^0.1 + x * |x|^0.3 + x * |x|^0.5.
inline Eigen::Vector3d feature_transform(const Eigen::Vector3d& x) {
  Eigen::Vector3d out;
  for (int j = 0; j < 3; ++j) {
    const double ax = std::abs(x(j));
    out(j) = x(j) * std::pow(ax, 0.1) + x(j) * std::pow(ax, 0.3) + x(j) * std::pow(ax, 0.5);
  }
  return out;
}

/// Noise-free potential-outcome means.
inline double sim_mu1(const Eigen::Vector3d& x) {
  const Eigen::Vector3d t = feature_transform(x);
  return 15.0 + 0.4 * t(0) * t(1) + 0.7 * t(2);
}

inline double sim_mu0(const Eigen::Vector3d& x) {
  const Eigen::Vector3d t = feature_transform(x);
  return 10.0 + 0.1 * t(0) + 0.5 * t(1) * t(2);
}

inline double sim_cate(const Eigen::Vector3d& x) { return sim_mu1(x) - sim_mu0(x); }

inline double sim_propensity(const Eigen::Vector3d& x, double beta) {
  if (beta == 0.0) return 0.5;
  return sigmoid(-beta * feature_transform(x)(1));
}

namespace detail {

struct Gaussian3 {
  Eigen::Vector3d mean;
  Eigen::Matrix3d chol;  // lower factor
  double log_norm = 0.0;

  Gaussian3(const Eigen::Vector3d& m, const Eigen::Matrix3d& cov) : mean(m) {
    if (!cov.isApprox(cov.transpose())) throw std::invalid_argument("covariance matrix is not symmetric");
    Eigen::LLT<Eigen::Matrix3d> llt(cov);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("covariance matrix is not positive definite");
    chol = llt.matrixL();
    const double log_det = 2.0 * chol.diagonal().array().log().sum();
    log_norm = -0.5 * (3.0 * std::log(2.0 * std::numbers::pi) + log_det);
  }

  [[nodiscard]] double log_density(const Eigen::Vector3d& x) const {
    const Eigen::Vector3d z = chol.triangularView<Eigen::Lower>().solve(x - mean);
    return log_norm - 0.5 * z.squaredNorm();
  }

  template <typename Rng>
  Eigen::Vector3d draw(Rng& rng, std::normal_distribution<double>& normal) const {
    Eigen::Vector3d z;
    for (int j = 0; j < 3; ++j) z(j) = normal(rng);
    return mean + chol * z;
  }
};

}  // namespace detail

/// Sampling score s(x) = q f1(x) / (q f1(x) + (1 - q) f0(x)).
struct TrueSamplingScore {
  detail::Gaussian3 source;
  detail::Gaussian3 target;
  double q;

  double operator()(const Eigen::VectorXd& x) const {
    const double l1 = std::log(q) + source.log_density(x);
    const double l0 = std::log1p(-q) + target.log_density(x);
    return sigmoid(l1 - l0);
  }
};

inline NuisanceFunctions true_nuisances(const SimConfig& cfg) {
  const double q = static_cast<double>(cfg.n_source) / static_cast<double>(cfg.n_source + cfg.n_target);
  TrueSamplingScore s{detail::Gaussian3(cfg.mu_source, cfg.cov_source), detail::Gaussian3(cfg.mu_target, cfg.cov_target), q};
  const double beta = cfg.beta_treatment;
  return {[](const Eigen::VectorXd& x) { return sim_mu0(x); },
          [](const Eigen::VectorXd& x) { return sim_mu1(x); },
          [beta](const Eigen::VectorXd& x) { return sim_propensity(x, beta); },
          s};
}

struct SimulatedData {
  CombinedDataset data;       // source rows first, then target rows
  PotentialOutcomes outcomes; // all rows
  NuisanceFunctions truth;
};

inline void check_config(const SimConfig& cfg) {
  if (cfg.n_source < 1 || cfg.n_target < 1) throw std::invalid_argument("n_source and n_target must be >= 1");
  if (!(cfg.noise_sd >= 0.0)) throw std::invalid_argument("noise_sd must be nonnegative");
  if (!(cfg.beta_treatment >= 0.0)) throw std::invalid_argument("beta_treatment must be nonnegative");
}

inline SimulatedData generate(const SimConfig& cfg) {
  check_config(cfg);
  const detail::Gaussian3 source(cfg.mu_source, cfg.cov_source);
  const detail::Gaussian3 target(cfg.mu_target, cfg.cov_target);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const auto n1 = static_cast<Eigen::Index>(cfg.n_source);
  const auto n = n1 + static_cast<Eigen::Index>(cfg.n_target);
  SimulatedData out;
  auto& d = out.data;
  d.covariates.resize(n, 3);
  d.group.assign(static_cast<std::size_t>(n), 0);
  d.treatment.assign(static_cast<std::size_t>(n), std::nullopt);
  d.outcome.assign(static_cast<std::size_t>(n), std::nullopt);
  d.covariate_names = {"x1", "x2", "x3"};
  out.outcomes.y1.resize(n);
  out.outcomes.y0.resize(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const bool is_source = i < n1;
    const Eigen::Vector3d x = is_source ? source.draw(rng, normal) : target.draw(rng, normal);
    d.covariates.row(i) = x.transpose();
    const double eps1 = cfg.noise_sd * normal(rng);
    const double eps0 = cfg.shared_noise ? eps1 : cfg.noise_sd * normal(rng);
    const double y1 = sim_mu1(x) + eps1;
    const double y0 = sim_mu0(x) + eps0;
    out.outcomes.y1(i) = y1;
    out.outcomes.y0(i) = y0;
    if (is_source) {
      const auto row = static_cast<std::size_t>(i);
      const int a = unif(rng) < sim_propensity(x, cfg.beta_treatment) ? 1 : 0;
      d.group[row] = 1;
      d.treatment[row] = a;
      d.outcome[row] = a == 1 ? y1 : y0;
    }
  }
  out.truth = true_nuisances(cfg);
  return out;
}

/// Moves the target mean to mu_source + d * (-1, +1, -1), so the Chebyshev
/// distance between the two means is d.
inline SimConfig shift_sweep_config(const SimConfig& base, double chebyshev_distance) {
  if (!(chebyshev_distance >= 0.0)) throw std::invalid_argument("Chebyshev distance must be nonnegative");
  SimConfig cfg = base;
  cfg.mu_target = base.mu_source + chebyshev_distance * Eigen::Vector3d(-1.0, 1.0, -1.0);
  return cfg;
}

inline SimConfig treatment_sweep_config(const SimConfig& base, double beta) {
  SimConfig cfg = base;
  cfg.beta_treatment = beta;
  return cfg;
}

/// Sidecar with potential outcomes and true nuisance values per row.
inline void write_truth_csv(std::ostream& out, const SimulatedData& sim) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "y1,y0,mu0_true,mu1_true,e1_true,s_true\n";
  for (Eigen::Index i = 0; i < sim.outcomes.y1.size(); ++i) {
    const Eigen::VectorXd x = sim.data.row(static_cast<std::size_t>(i));
    out << sim.outcomes.y1(i) << ',' << sim.outcomes.y0(i) << ',' << sim.truth.mu0(x) << ',' << sim.truth.mu1(x)
        << ',' << sim.truth.e1(x) << ',' << sim.truth.s(x) << '\n';
  }
}

inline void write_truth_csv(const std::string& path, const SimulatedData& sim) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_truth_csv(out, sim);
}

}  // namespace covshift
