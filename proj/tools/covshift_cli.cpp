// covshift: simulate data, run Monte Carlo tables and sweeps, learn and
// evaluate treatment policies on CSV data.

#include "covshift/covshift.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using covshift::json;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

covshift::ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? covshift::ExperimentConfig{} : covshift::load_experiment_config(path);
}

/// "0,1,2" or "0,0.5,...,3" (arithmetic progression through the last value).
std::vector<double> parse_grid(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(item);
  std::vector<double> grid;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (items[k] == "...") {
      if (grid.size() < 2 || k + 1 != items.size() - 1) throw std::invalid_argument("grid ellipsis needs the form a,b,...,c");
      const double step = grid[grid.size() - 1] - grid[grid.size() - 2];
      const double last = std::stod(items[k + 1]);
      if (!(step > 0.0)) throw std::invalid_argument("grid step must be positive");
      const double start = grid.back();
      const auto count = static_cast<long>(std::floor((last - start) / step + 1e-9));
      for (long i = 1; i <= count; ++i) grid.push_back(start + static_cast<double>(i) * step);
      if (std::abs(grid.back() - last) > 1e-9 * std::max(1.0, std::abs(last))) grid.push_back(last);
      break;
    }
    grid.push_back(std::stod(items[k]));
  }
  if (grid.empty()) throw std::invalid_argument("empty grid");
  return grid;
}

std::string default_config_text() {
  return "Config file (JSON; every key optional, defaults shown):\n" +
         covshift::experiment_config_to_json(covshift::ExperimentConfig{}).dump(2) +
         "\n(experiment.workers is also accepted.)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy evaluation and learning under covariate shift"};
  app.require_subcommand(1);
  app.footer(default_config_text());

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a simulated source/target dataset");
  std::string sim_config, sim_out_data, sim_out_truth;
  std::optional<std::uint64_t> sim_seed;
  sim_cmd->add_option("--config", sim_config, "Config file");
  sim_cmd->add_option("--out-data", sim_out_data, "Dataset CSV")->required();
  sim_cmd->add_option("--out-truth", sim_out_truth, "Sidecar CSV with potential outcomes and true nuisances");
  sim_cmd->add_option("--seed", sim_seed, "Seed (overrides config)");

  // table
  auto* table_cmd = app.add_subcommand("table", "Run replicated experiments and aggregate");
  std::string table_config, table_methods, table_out, table_out_csv, table_scope;
  std::optional<int> table_reps, table_workers;
  table_cmd->add_option("--config", table_config, "Config file");
  table_cmd->add_option("--methods", table_methods, "Comma list of direct,ipw,se");
  table_cmd->add_option("--reps", table_reps, "Replications (default 50)");
  table_cmd->add_option("--workers", table_workers, "Worker threads (default 1)");
  table_cmd->add_option("--welfare-scope", table_scope, "Welfare change over all|target rows (default all)");
  table_cmd->add_option("--out", table_out, "JSON report")->required();
  table_cmd->add_option("--out-csv", table_out_csv, "Aggregate CSV");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Vary covariate shift or treatment assignment");
  std::string sweep_kind, sweep_grid, sweep_config, sweep_out_csv, sweep_out, sweep_methods, sweep_scope;
  std::optional<int> sweep_reps, sweep_workers;
  sweep_cmd->add_option("--kind", sweep_kind, "shift|treatment")->required();
  sweep_cmd->add_option("--grid", sweep_grid, "Grid values, e.g. 0,1,2,3 or 0,0.5,...,3")->required();
  sweep_cmd->add_option("--config", sweep_config, "Config file");
  sweep_cmd->add_option("--reps", sweep_reps, "Replications per grid point");
  sweep_cmd->add_option("--workers", sweep_workers, "Worker threads");
  sweep_cmd->add_option("--methods", sweep_methods, "Comma list of direct,ipw,se");
  sweep_cmd->add_option("--welfare-scope", sweep_scope, "all|target");
  sweep_cmd->add_option("--out-csv", sweep_out_csv, "Long-format CSV")->required();
  sweep_cmd->add_option("--out", sweep_out, "Optional JSON with every grid point's report");

  // learn
  auto* learn_cmd = app.add_subcommand("learn", "Fit nuisances and learn a policy from a CSV dataset");
  std::string learn_data, learn_method = "se", learn_out, learn_config, learn_estimand = "r";
  learn_cmd->add_option("--data", learn_data, "Dataset CSV (covariates, g, a, y)")->required();
  learn_cmd->add_option("--method", learn_method, "direct|ipw|se (default se)");
  learn_cmd->add_option("--estimand", learn_estimand, "r (target reward) or v (whole population, se only)");
  learn_cmd->add_option("--config", learn_config, "Config file (nuisance and learner sections are used)");
  learn_cmd->add_option("--out-policy", learn_out, "Policy JSON")->required();

  // estimate
  auto* est_cmd = app.add_subcommand("estimate", "Estimate the reward of a stored policy");
  std::string est_data, est_policy, est_method = "se", est_estimand = "r", est_out, est_config;
  bool est_smooth = false;
  est_cmd->add_option("--data", est_data, "Dataset CSV")->required();
  est_cmd->add_option("--policy", est_policy, "Policy JSON")->required();
  est_cmd->add_option("--method", est_method, "direct|ipw|se (default se)");
  est_cmd->add_option("--estimand", est_estimand, "r|v (default r)");
  est_cmd->add_option("--config", est_config, "Config file (nuisance section is used)");
  est_cmd->add_flag("--smooth", est_smooth, "Use smoothed policy values instead of hard decisions");
  est_cmd->add_option("--out", est_out, "JSON output")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed()) {
      auto cfg = load_config(sim_config);
      if (sim_seed) cfg.sim.seed = *sim_seed;
      const auto sim = covshift::generate(cfg.sim);
      covshift::write_csv(sim_out_data, sim.data);
      if (!sim_out_truth.empty()) covshift::write_truth_csv(sim_out_truth, sim);
    } else if (table_cmd->parsed()) {
      auto cfg = load_config(table_config);
      if (!table_methods.empty()) cfg.methods = covshift::parse_methods(table_methods);
      if (table_reps) cfg.replications = *table_reps;
      if (table_workers) cfg.workers = *table_workers;
      if (!table_scope.empty()) cfg.welfare_scope = covshift::welfare_scope_from_string(table_scope);
      const auto report = covshift::run_table(cfg);
      write_json(table_out, covshift::report_to_json(report));
      if (!table_out_csv.empty()) {
        std::ostringstream csv;
        covshift::write_table_csv(csv, report);
        write_text(table_out_csv, csv.str());
      }
      if (report.completed < cfg.replications) {
        std::cerr << "warning: " << cfg.replications - report.completed << " replication(s) failed\n";
      }
    } else if (sweep_cmd->parsed()) {
      auto cfg = load_config(sweep_config);
      if (!sweep_methods.empty()) cfg.methods = covshift::parse_methods(sweep_methods);
      if (sweep_reps) cfg.replications = *sweep_reps;
      if (sweep_workers) cfg.workers = *sweep_workers;
      if (!sweep_scope.empty()) cfg.welfare_scope = covshift::welfare_scope_from_string(sweep_scope);
      const auto points = covshift::run_sweep(covshift::sweep_kind_from_string(sweep_kind), parse_grid(sweep_grid), cfg);
      std::ostringstream csv;
      covshift::write_sweep_csv(csv, points);
      write_text(sweep_out_csv, csv.str());
      if (!sweep_out.empty()) {
        json all = json::array();
        for (const auto& pt : points) all.push_back(json{{"grid_value", pt.grid_value}, {"report", covshift::report_to_json(pt.report)}});
        write_json(sweep_out, json{{"kind", sweep_kind}, {"points", all}});
      }
    } else if (learn_cmd->parsed()) {
      const auto cfg = load_config(learn_config);
      const auto data = covshift::ingest_csv(learn_data);
      const auto method = covshift::estimator_from_string(learn_method);
      const auto estimand = covshift::estimand_from_string(learn_estimand);
      const auto ns = covshift::fit_nuisances(data, cfg.nuisance);
      const auto coeffs = covshift::coefficients(method, estimand, data, ns);
      const auto learned = covshift::learn_policy(coeffs, data.covariates, cfg.learner);
      const auto est = covshift::estimate(coeffs, learned.policy.hard_values(data.covariates));
      json out = covshift::policy_to_json(learned.policy);
      out["method"] = learn_method;
      out["estimand"] = learn_estimand;
      out["covariates"] = data.covariate_names;
      out["best_epoch"] = learned.best_epoch;
      out["trace"] = learned.trace;
      out["estimate"] = covshift::estimate_to_json(est);
      if (ns.models) out["nuisance"] = covshift::fitted_models_to_json(*ns.models);
      write_json(learn_out, out);
    } else if (est_cmd->parsed()) {
      const auto cfg = load_config(est_config);
      const auto data = covshift::ingest_csv(est_data);
      std::ifstream pin(est_policy);
      if (!pin) throw std::runtime_error("cannot open policy '" + est_policy + "'");
      json pj;
      pin >> pj;
      const auto policy = covshift::policy_from_json(pj);
      if (policy.map.p_in != static_cast<Eigen::Index>(data.dim()))
        throw std::invalid_argument("policy expects " + std::to_string(policy.map.p_in) + " covariates, data has " +
                                    std::to_string(data.dim()));
      const auto ns = covshift::fit_nuisances(data, cfg.nuisance);
      const auto coeffs = covshift::coefficients(covshift::estimator_from_string(est_method),
                                                 covshift::estimand_from_string(est_estimand), data, ns);
      Eigen::VectorXd values(static_cast<Eigen::Index>(data.size()));
      for (std::size_t i = 0; i < data.size(); ++i) {
        const Eigen::VectorXd x = data.row(i);
        values(static_cast<Eigen::Index>(i)) = est_smooth ? policy.smooth_value(x) : policy.hard_value(x);
      }
      json out = covshift::estimate_to_json(covshift::estimate(coeffs, values));
      out["n"] = data.size();
      out["n_source"] = data.n_source();
      out["n_target"] = data.n_target();
      write_json(est_out, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
