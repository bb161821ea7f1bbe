#pragma once

// Monte Carlo experiment harness: replications of simulate -> fit nuisances ->
// build reward coefficients -> learn policy -> evaluate, plus aggregation,
// paired tests against the Direct baseline, and parameter sweeps.

#include "covshift/dataset.hpp"
#include "covshift/estimators.hpp"
#include "covshift/nuisance.hpp"
#include "covshift/policy.hpp"
#include "covshift/simulate.hpp"
#include "covshift/stats.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace covshift {

enum class WelfareScope { All, Target };

inline std::string to_string(WelfareScope s) { return s == WelfareScope::All ? "all" : "target"; }

inline WelfareScope welfare_scope_from_string(const std::string& s) {
  if (s == "all") return WelfareScope::All;
  if (s == "target") return WelfareScope::Target;
  throw std::invalid_argument("unknown welfare scope '" + s + "' (expected all|target)");
}

struct EvalMetrics {
  double true_reward = 0.0;
  double regret = 0.0;
  double policy_error = 0.0;
  double welfare_change = 0.0;
};

/// Metrics from hard decisions over all rows (source rows first or interleaved;
/// only the group vector matters). Reward, regret and policy error use target
/// rows; the welfare change sums over the rows selected by `scope`.
inline EvalMetrics evaluate_decisions(const Eigen::VectorXd& decisions, const Eigen::VectorXd& oracle_decisions,
                                      const CombinedDataset& d, const PotentialOutcomes& po,
                                      WelfareScope scope = WelfareScope::All) {
  const auto n = static_cast<Eigen::Index>(d.size());
  if (po.y1.size() != n || po.y0.size() != n) throw std::invalid_argument("evaluate_policy: potential outcomes missing or misaligned");
  if (decisions.size() != n || oracle_decisions.size() != n) throw std::invalid_argument("evaluate_policy: decision length mismatch");
  double reward = 0.0;
  double oracle_reward = 0.0;
  double disagreements = 0.0;
  double welfare = 0.0;
  std::size_t n0 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool target = !d.is_source(static_cast<std::size_t>(i));
    const double effect = po.y1(i) - po.y0(i);
    if (target) {
      ++n0;
      reward += decisions(i) * po.y1(i) + (1.0 - decisions(i)) * po.y0(i);
      oracle_reward += oracle_decisions(i) * po.y1(i) + (1.0 - oracle_decisions(i)) * po.y0(i);
      const double diff = oracle_decisions(i) - decisions(i);
      disagreements += diff * diff;
    }
    if (target || scope == WelfareScope::All) welfare += effect * decisions(i);
  }
  if (n0 == 0) throw std::invalid_argument("evaluate_policy: no target rows");
  const double inv = 1.0 / static_cast<double>(n0);
  return EvalMetrics{reward * inv, (oracle_reward - reward) * inv, disagreements * inv, welfare};
}

inline EvalMetrics evaluate_policy(const Policy& policy, const OraclePolicy& oracle, const CombinedDataset& d,
                                   const PotentialOutcomes& po, WelfareScope scope = WelfareScope::All) {
  return evaluate_decisions(policy.hard_values(d.covariates), oracle.decisions(d.covariates), d, po, scope);
}

struct ExperimentConfig {
  SimConfig sim;
  NuisanceConfig nuisance;
  LearnerConfig learner;
  std::vector<Estimator> methods{Estimator::Direct, Estimator::IPW, Estimator::SE};
  int replications = 50;
  int workers = 1;  // not part of the report: results do not depend on it
  WelfareScope welfare_scope = WelfareScope::All;
  double eta = 0.05;
  std::optional<double> policy_class_size;  // default 10^p_out of the policy map
};

struct MethodResult {
  Estimator method = Estimator::SE;
  EvalMetrics metrics;
  RewardEstimate estimate;  // estimated reward of the learned hard policy
  Policy policy;
  int best_epoch = 0;
  double best_objective = 0.0;
  std::optional<BoundReport> bound;  // SE only
};

struct ReplicationResult {
  int index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::optional<FittedModels> nuisance_models;
  double oracle_reward = 0.0;
  std::vector<MethodResult> methods;
};

inline constexpr std::array<const char*, 4> kMetricNames{"reward", "regret", "policy_error", "welfare_change"};

inline double metric_value(const EvalMetrics& m, std::size_t k) {
  switch (k) {
    case 0: return m.true_reward;
    case 1: return m.regret;
    case 2: return m.policy_error;
    case 3: return m.welfare_change;
  }
  throw std::out_of_range("metric index");
}

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;
  std::optional<double> relative_improvement;  // vs Direct
  std::optional<double> p_value;               // paired t-test vs Direct
  bool p_degenerate = false;
};

struct MethodSummary {
  Estimator method = Estimator::SE;
  std::map<std::string, MetricSummary> metrics;  // keyed by metric name, plus "estimated_reward"
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<ReplicationResult> replications;
  int completed = 0;
  std::vector<MethodSummary> summary;
};

/// One replication: simulate with seed base+index, fit, learn and evaluate every method.
inline ReplicationResult run_replication(const ExperimentConfig& cfg, int index) {
  ReplicationResult rep;
  rep.index = index;
  rep.seed = cfg.sim.seed + static_cast<std::uint64_t>(index);
  try {
    SimConfig sim_cfg = cfg.sim;
    sim_cfg.seed = rep.seed;
    const SimulatedData sim = generate(sim_cfg);
    const NuisanceSet ns = fit_nuisances(sim.data, cfg.nuisance);
    rep.nuisance_models = ns.models;
    const NuisanceTable fitted = evaluate_table(ns, sim.data);

    NuisanceSet truth_set;
    truth_set.full = sim.truth;
    truth_set.clip = cfg.nuisance.clip;
    const NuisanceTable truth = evaluate_table(truth_set, sim.data);

    const OraclePolicy oracle{[](const Eigen::VectorXd& x) { return sim_cate(x); }};
    const Eigen::VectorXd oracle_all = oracle.decisions(sim.data.covariates);
    const EvalMetrics oracle_metrics = evaluate_decisions(oracle_all, oracle_all, sim.data, sim.outcomes, cfg.welfare_scope);
    rep.oracle_reward = oracle_metrics.true_reward;

    for (const Estimator m : cfg.methods) {
      const RewardCoefficients coeffs = coefficients(m, Estimand::RTarget, sim.data, fitted);
      LearnerConfig lc = cfg.learner;
      lc.seed = cfg.learner.seed + static_cast<std::uint64_t>(index);
      const LearnResult learned = learn_policy(coeffs, sim.data.covariates, lc);
      const Eigen::VectorXd hard = learned.policy.hard_values(sim.data.covariates);

      MethodResult mr;
      mr.method = m;
      mr.policy = learned.policy;
      mr.best_epoch = learned.best_epoch;
      mr.best_objective = learned.best_objective;
      mr.metrics = evaluate_decisions(hard, oracle_all, sim.data, sim.outcomes, cfg.welfare_scope);
      mr.estimate = estimate(coeffs, hard);
      if (m == Estimator::SE) {
        const double size = cfg.policy_class_size.value_or(default_policy_class_size(learned.policy.map.p_out()));
        BoundReport b = generalization_bound(sim.data, fitted, cfg.eta, size);
        b.bias_diagnostic = bias_diagnostic(sim.data, truth, fitted, hard);
        mr.bound = b;
      }
      rep.methods.push_back(std::move(mr));
    }
    rep.ok = true;
  } catch (const std::exception& e) {
    rep.ok = false;
    rep.error = e.what();
    rep.methods.clear();
  }
  return rep;
}

/// Runs `count` jobs on `workers` threads; results land in index order.
template <typename Result, typename Job>
std::vector<Result> run_parallel(int count, int workers, Job job) {
  std::vector<Result> results(static_cast<std::size_t>(std::max(count, 0)));
  const int threads = std::max(1, std::min(workers, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) results[static_cast<std::size_t>(i)] = job(i);
    return results;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) results[static_cast<std::size_t>(i)] = job(i);
    });
  }
  for (auto& th : pool) th.join();
  return results;
}

inline std::vector<MethodSummary> summarize(const ExperimentConfig& cfg, const std::vector<ReplicationResult>& reps) {
  std::vector<const ReplicationResult*> ok;
  for (const auto& r : reps)
    if (r.ok) ok.push_back(&r);

  auto series = [&](std::size_t method_pos, const std::string& metric) {
    std::vector<double> v;
    v.reserve(ok.size());
    for (const auto* r : ok) {
      const auto& mr = r->methods[method_pos];
      if (metric == "estimated_reward") {
        v.push_back(mr.estimate.value);
        continue;
      }
      for (std::size_t k = 0; k < kMetricNames.size(); ++k)
        if (metric == kMetricNames[k]) v.push_back(metric_value(mr.metrics, k));
    }
    return v;
  };

  std::optional<std::size_t> direct_pos;
  for (std::size_t k = 0; k < cfg.methods.size(); ++k)
    if (cfg.methods[k] == Estimator::Direct) direct_pos = k;

  std::vector<std::string> names(kMetricNames.begin(), kMetricNames.end());
  names.emplace_back("estimated_reward");

  std::vector<MethodSummary> out;
  for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
    MethodSummary ms;
    ms.method = cfg.methods[k];
    for (const auto& name : names) {
      MetricSummary s;
      const auto v = series(k, name);
      if (!v.empty()) {
        s.mean = mean_of(v);
        s.sd = sd_of(v);
      }
      if (direct_pos && *direct_pos != k && !v.empty()) {
        const auto base = series(*direct_pos, name);
        const double base_mean = mean_of(base);
        if (base_mean != 0.0) s.relative_improvement = (s.mean - base_mean) / base_mean;
        if (v.size() >= 2) {
          const auto t = paired_t_test(v, base);
          s.p_value = t.p_value;
          s.p_degenerate = t.degenerate;
        }
      }
      ms.metrics.emplace(name, s);
    }
    out.push_back(std::move(ms));
  }
  return out;
}

inline ExperimentReport run_table(const ExperimentConfig& cfg) {
  if (cfg.replications < 2) throw std::invalid_argument("run_table: replications must be >= 2");
  if (cfg.methods.empty()) throw std::invalid_argument("run_table: no methods selected");
  ExperimentReport report;
  report.config = cfg;
  report.replications =
      run_parallel<ReplicationResult>(cfg.replications, cfg.workers, [&](int i) { return run_replication(cfg, i); });
  for (const auto& r : report.replications) report.completed += r.ok ? 1 : 0;
  report.summary = summarize(cfg, report.replications);
  return report;
}

enum class SweepKind { Shift, Treatment };

inline SweepKind sweep_kind_from_string(const std::string& s) {
  if (s == "shift") return SweepKind::Shift;
  if (s == "treatment") return SweepKind::Treatment;
  throw std::invalid_argument("unknown sweep kind '" + s + "' (expected shift|treatment)");
}

struct SweepPoint {
  double grid_value = 0.0;
  ExperimentReport report;
};

inline ExperimentConfig sweep_point_config(const ExperimentConfig& base, SweepKind kind, double value) {
  ExperimentConfig cfg = base;
  cfg.sim = kind == SweepKind::Shift ? shift_sweep_config(base.sim, value) : treatment_sweep_config(base.sim, value);
  return cfg;
}

inline std::vector<SweepPoint> run_sweep(SweepKind kind, const std::vector<double>& grid, const ExperimentConfig& base) {
  if (grid.empty()) throw std::invalid_argument("run_sweep: empty grid");
  std::vector<SweepPoint> out;
  out.reserve(grid.size());
  for (double v : grid) out.push_back({v, run_table(sweep_point_config(base, kind, v))});
  return out;
}

/// Long-format plot data: grid_value,method,metric,mean,sd.
inline void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "grid_value,method,metric,mean,sd\n";
  for (const auto& pt : points) {
    for (const auto& ms : pt.report.summary) {
      for (const char* name : kMetricNames) {
        const auto& s = ms.metrics.at(name);
        out << pt.grid_value << ',' << to_string(ms.method) << ',' << name << ',' << s.mean << ',' << s.sd << '\n';
      }
    }
  }
}

/// Aggregate table: method,metric,mean,sd,ri,p_value (empty cells when absent).
inline void write_table_csv(std::ostream& out, const ExperimentReport& report) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "method,metric,mean,sd,ri,p_value\n";
  for (const auto& ms : report.summary) {
    for (const auto& [name, s] : ms.metrics) {
      out << to_string(ms.method) << ',' << name << ',' << s.mean << ',' << s.sd << ',';
      if (s.relative_improvement) out << *s.relative_improvement;
      out << ',';
      if (s.p_value) out << *s.p_value;
      out << '\n';
    }
  }
}

}  // namespace covshift
