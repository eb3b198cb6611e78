#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fusioniv/analysis.hpp"
#include "fusioniv/dgp.hpp"

namespace fusioniv {

enum class ScenarioId { M0, M1, M2, M3, M4 };

std::string scenario_name(ScenarioId id);
std::optional<ScenarioId> parse_scenario_name(const std::string& name);

// Which working models see transformed covariates per scenario:
//   M0: none; M1: pi, H, omega; M2: lambda, pi; M3: lambda, tau; M4: all.
struct ScenarioConfig {
  ScenarioId id = ScenarioId::M0;
  SourceFlags sources;
};
ScenarioConfig scenario_config(ScenarioId id);

struct MetricsSummary {
  double abs_bias = 0.0;
  double sd = 0.0;   // sample SD of the replicate estimates
  double mse = 0.0;  // bias^2 + population variance
  double rmse = 0.0;
};
// Requires two or more estimates.
MetricsSummary metrics(const std::vector<double>& estimates, double truth);

struct EstimatorSummary {
  EstimatorKind kind = EstimatorKind::D1;
  int successes = 0;
  int failures = 0;
  double mean = 0.0;
  MetricsSummary metric;
  std::optional<double> mean_se_sandwich;
  std::optional<double> ci_coverage;
  std::vector<double> estimates;  // per successful replicate, replicate order
};

struct MonteCarloReport {
  std::string scenario;
  int n = 0;
  int reps = 0;
  std::uint64_t seed = 0;
  double truth = 0.0;
  std::vector<EstimatorSummary> estimators;
  double mean_clamp_rate = 0.0;
};

struct RunOptions {
  int parallelism = 1;
  bool with_sandwich = false;  // per-replicate sandwich SE + Wald coverage
  std::vector<EstimatorKind> sandwich_kinds;  // empty = all requested kinds
  double ci_level = 0.95;
  double abort_failure_share = 0.10;
};

// The analysis used in the simulation study: main-effects lambda/tau/H/omega
// plus the quadratic source-score model.
AnalysisSpec scenario_analysis_spec(const ScenarioConfig& scenario);

// One seeded study: replicate k draws from stream hash(seed, k); reports are
// identical for any parallelism degree.
MonteCarloReport run_scenario(const ScenarioConfig& scenario, const DgpParams& params, int n,
                              int reps, const std::vector<EstimatorKind>& kinds,
                              std::uint64_t seed, const RunOptions& options = {});

// Table rendering: one panel of |bias| (SD), one of MSE; rows = scenarios.
std::string render_report_table(const std::vector<MonteCarloReport>& reports);

}  // namespace fusioniv
