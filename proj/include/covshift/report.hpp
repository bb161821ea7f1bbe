#pragma once

// JSON for experiment configs, learned policies and experiment reports.
// Config objects accept partial input: missing keys keep their defaults,
// unknown keys are rejected.

#include "covshift/harness.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace covshift {

using nlohmann::json;

namespace detail {

inline json to_json_vec(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Eigen::VectorXd vec_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  return v;
}

inline json to_json_mat3(const Eigen::Matrix3d& m) {
  json rows = json::array();
  for (int i = 0; i < 3; ++i) rows.push_back(json::array({m(i, 0), m(i, 1), m(i, 2)}));
  return rows;
}

inline Eigen::Matrix3d mat3_from_json(const json& j) {
  if (j.size() != 3) throw std::invalid_argument("covariance must be a 3x3 array");
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i) {
    if (j.at(static_cast<std::size_t>(i)).size() != 3) throw std::invalid_argument("covariance must be a 3x3 array");
    for (int k = 0; k < 3; ++k) m(i, k) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& section) {
  if (!j.is_object()) throw std::invalid_argument("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("unknown config key '" + section + "." + key + "'");
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline json feature_map_to_json(const FeatureMap& m) {
  json j{{"kind", to_string(m.kind)}, {"p_in", m.p_in}};
  if (m.standardized()) {
    j["center"] = detail::to_json_vec(m.center);
    j["scale"] = detail::to_json_vec(m.scale);
  }
  return j;
}

inline FeatureMap feature_map_from_json(const json& j) {
  FeatureMap m(feature_kind_from_string(j.at("kind").get<std::string>()), j.at("p_in").get<Eigen::Index>());
  if (j.contains("center")) {
    m.center = detail::vec_from_json(j.at("center"));
    m.scale = detail::vec_from_json(j.at("scale"));
    if (m.center.size() != m.p_in || m.scale.size() != m.p_in) throw std::invalid_argument("feature map standardization has wrong length");
  }
  return m;
}

inline json sim_config_to_json(const SimConfig& c) {
  return json{{"n_source", c.n_source},
              {"n_target", c.n_target},
              {"mu_source", detail::to_json_vec(c.mu_source)},
              {"mu_target", detail::to_json_vec(c.mu_target)},
              {"cov_source", detail::to_json_mat3(c.cov_source)},
              {"cov_target", detail::to_json_mat3(c.cov_target)},
              {"beta_treatment", c.beta_treatment},
              {"noise_sd", c.noise_sd},
              {"shared_noise", c.shared_noise},
              {"seed", c.seed}};
}

inline void sim_config_from_json(const json& j, SimConfig& c) {
  detail::reject_unknown(j, {"n_source", "n_target", "mu_source", "mu_target", "cov_source", "cov_target",
                             "beta_treatment", "noise_sd", "shared_noise", "seed"},
                         "sim");
  detail::read_opt(j, "n_source", c.n_source);
  detail::read_opt(j, "n_target", c.n_target);
  if (j.contains("mu_source")) c.mu_source = detail::vec_from_json(j.at("mu_source"));
  if (j.contains("mu_target")) c.mu_target = detail::vec_from_json(j.at("mu_target"));
  if (j.contains("cov_source")) c.cov_source = detail::mat3_from_json(j.at("cov_source"));
  if (j.contains("cov_target")) c.cov_target = detail::mat3_from_json(j.at("cov_target"));
  detail::read_opt(j, "beta_treatment", c.beta_treatment);
  detail::read_opt(j, "noise_sd", c.noise_sd);
  detail::read_opt(j, "shared_noise", c.shared_noise);
  detail::read_opt(j, "seed", c.seed);
}

inline json nuisance_config_to_json(const NuisanceConfig& c) {
  return json{{"outcome_map", to_string(c.outcome_map)},
              {"propensity_map", to_string(c.propensity_map)},
              {"sampling_map", to_string(c.sampling_map)},
              {"standardize", c.standardize},
              {"outcome_ridge", c.outcome_ridge},
              {"logistic_ridge", c.logistic.ridge},
              {"max_iter", c.logistic.max_iter},
              {"tol", c.logistic.tol},
              {"clip", c.clip},
              {"folds", c.folds},
              {"coarsen_sparse_arms", c.coarsen_sparse_arms}};
}

inline void nuisance_config_from_json(const json& j, NuisanceConfig& c) {
  detail::reject_unknown(j, {"outcome_map", "propensity_map", "sampling_map", "standardize", "outcome_ridge",
                             "logistic_ridge", "max_iter", "tol", "clip", "folds", "coarsen_sparse_arms"},
                         "nuisance");
  if (j.contains("outcome_map")) c.outcome_map = feature_kind_from_string(j.at("outcome_map").get<std::string>());
  if (j.contains("propensity_map")) c.propensity_map = feature_kind_from_string(j.at("propensity_map").get<std::string>());
  if (j.contains("sampling_map")) c.sampling_map = feature_kind_from_string(j.at("sampling_map").get<std::string>());
  detail::read_opt(j, "standardize", c.standardize);
  detail::read_opt(j, "outcome_ridge", c.outcome_ridge);
  detail::read_opt(j, "logistic_ridge", c.logistic.ridge);
  detail::read_opt(j, "max_iter", c.logistic.max_iter);
  detail::read_opt(j, "tol", c.logistic.tol);
  detail::read_opt(j, "clip", c.clip);
  detail::read_opt(j, "folds", c.folds);
  detail::read_opt(j, "coarsen_sparse_arms", c.coarsen_sparse_arms);
}

inline json learner_config_to_json(const LearnerConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"step_size", c.step_size},
              {"max_epochs", c.max_epochs},
              {"temperature", c.temperature},
              {"final_temperature", c.final_temperature},
              {"seed", c.seed},
              {"map", to_string(c.map)},
              {"standardize", c.standardize},
              {"normalize_coefficients", c.normalize_coefficients}};
}

inline void learner_config_from_json(const json& j, LearnerConfig& c) {
  detail::reject_unknown(j, {"batch_size", "step_size", "max_epochs", "temperature", "final_temperature", "seed", "map",
                             "standardize", "normalize_coefficients"},
                         "learner");
  detail::read_opt(j, "batch_size", c.batch_size);
  detail::read_opt(j, "step_size", c.step_size);
  detail::read_opt(j, "max_epochs", c.max_epochs);
  detail::read_opt(j, "temperature", c.temperature);
  // A lone temperature means a constant schedule.
  c.final_temperature = j.contains("temperature") ? c.temperature : c.final_temperature;
  detail::read_opt(j, "final_temperature", c.final_temperature);
  detail::read_opt(j, "seed", c.seed);
  if (j.contains("map")) c.map = feature_kind_from_string(j.at("map").get<std::string>());
  detail::read_opt(j, "standardize", c.standardize);
  detail::read_opt(j, "normalize_coefficients", c.normalize_coefficients);
}

/// Everything except the worker count, which cannot change results.
inline json experiment_config_to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(to_string(m));
  json exp{{"methods", methods},
           {"replications", c.replications},
           {"welfare_scope", to_string(c.welfare_scope)},
           {"eta", c.eta},
           {"policy_class_size", c.policy_class_size ? json(*c.policy_class_size) : json(nullptr)}};
  return json{{"sim", sim_config_to_json(c.sim)},
              {"nuisance", nuisance_config_to_json(c.nuisance)},
              {"learner", learner_config_to_json(c.learner)},
              {"experiment", exp}};
}

inline std::vector<Estimator> parse_methods(const std::string& list) {
  std::vector<Estimator> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(estimator_from_string(item));
  }
  if (out.empty()) throw std::invalid_argument("empty method list");
  return out;
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  detail::reject_unknown(j, {"sim", "nuisance", "learner", "experiment"}, "config");
  ExperimentConfig c;
  if (j.contains("sim")) sim_config_from_json(j.at("sim"), c.sim);
  if (j.contains("nuisance")) nuisance_config_from_json(j.at("nuisance"), c.nuisance);
  if (j.contains("learner")) learner_config_from_json(j.at("learner"), c.learner);
  if (j.contains("experiment")) {
    const json& e = j.at("experiment");
    detail::reject_unknown(e, {"methods", "replications", "workers", "welfare_scope", "eta", "policy_class_size"},
                           "experiment");
    if (e.contains("methods")) {
      c.methods.clear();
      for (const auto& m : e.at("methods")) c.methods.push_back(estimator_from_string(m.get<std::string>()));
    }
    detail::read_opt(e, "replications", c.replications);
    detail::read_opt(e, "workers", c.workers);
    if (e.contains("welfare_scope")) c.welfare_scope = welfare_scope_from_string(e.at("welfare_scope").get<std::string>());
    detail::read_opt(e, "eta", c.eta);
    if (e.contains("policy_class_size") && !e.at("policy_class_size").is_null())
      c.policy_class_size = e.at("policy_class_size").get<double>();
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config '" + path + "' is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

inline json policy_to_json(const Policy& p) {
  return json{{"map", feature_map_to_json(p.map)}, {"theta", detail::to_json_vec(p.theta)}, {"temperature", p.temperature}};
}

inline Policy policy_from_json(const json& j) {
  Policy p;
  p.map = feature_map_from_json(j.at("map"));
  p.theta = detail::vec_from_json(j.at("theta"));
  p.temperature = j.value("temperature", 1.0);
  if (p.theta.size() != p.map.p_out()) throw std::invalid_argument("policy theta length does not match its feature map");
  return p;
}

inline json fitted_models_to_json(const FittedModels& m) {
  auto lin = [](const auto& model) {
    return json{{"map", feature_map_to_json(model.map)}, {"beta", detail::to_json_vec(model.beta)}};
  };
  return json{{"mu0", lin(m.mu0)}, {"mu1", lin(m.mu1)}, {"e1", lin(m.e1)}, {"s", lin(m.s)}};
}

inline json metrics_to_json(const EvalMetrics& m) {
  return json{{"reward", m.true_reward},
              {"regret", m.regret},
              {"policy_error", m.policy_error},
              {"welfare_change", m.welfare_change}};
}

inline json estimate_to_json(const RewardEstimate& e) {
  json j{{"method", to_string(e.kind)}, {"estimand", to_string(e.estimand)}, {"value", e.value}};
  if (e.inference) {
    j["std_error"] = e.inference->std_error;
    j["ci_low"] = e.inference->ci_low;
    j["ci_high"] = e.inference->ci_high;
  }
  return j;
}

inline json bound_to_json(const BoundReport& b) {
  json j{{"eta", b.eta}, {"policy_class_size", b.policy_class_size}, {"bound_term", b.bound_term}};
  if (b.bias_diagnostic) j["bias_diagnostic"] = *b.bias_diagnostic;
  return j;
}

inline json report_to_json(const ExperimentReport& r) {
  json reps = json::array();
  for (const auto& rep : r.replications) {
    json jr{{"index", rep.index}, {"seed", rep.seed}, {"ok", rep.ok}};
    if (!rep.ok) {
      jr["error"] = rep.error;
      reps.push_back(jr);
      continue;
    }
    jr["oracle_reward"] = rep.oracle_reward;
    if (rep.nuisance_models) jr["nuisance"] = fitted_models_to_json(*rep.nuisance_models);
    json methods = json::object();
    for (const auto& mr : rep.methods) {
      json jm{{"metrics", metrics_to_json(mr.metrics)},
              {"estimate", estimate_to_json(mr.estimate)},
              {"policy", policy_to_json(mr.policy)},
              {"best_epoch", mr.best_epoch},
              {"best_objective", mr.best_objective}};
      if (mr.bound) jm["bound"] = bound_to_json(*mr.bound);
      methods[to_string(mr.method)] = jm;
    }
    jr["methods"] = methods;
    reps.push_back(jr);
  }
  json summary = json::object();
  for (const auto& ms : r.summary) {
    json jm = json::object();
    for (const auto& [name, s] : ms.metrics) {
      json js{{"mean", s.mean}, {"sd", s.sd}};
      if (s.relative_improvement) js["ri"] = *s.relative_improvement;
      if (s.p_value) {
        js["p_value"] = *s.p_value;
        js["p_degenerate"] = s.p_degenerate;
      }
      jm[name] = js;
    }
    summary[to_string(ms.method)] = jm;
  }
  return json{{"config", experiment_config_to_json(r.config)},
              {"completed", r.completed},
              {"replications", reps},
              {"summary", summary}};
}

}  // namespace covshift
