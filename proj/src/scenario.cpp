#include "fusioniv/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "fusioniv/error.hpp"
#include "fusioniv/stacked.hpp"
#include "fusioniv/stats.hpp"

namespace fusioniv {

std::string scenario_name(ScenarioId id) {
  switch (id) {
    case ScenarioId::M0: return "M0";
    case ScenarioId::M1: return "M1";
    case ScenarioId::M2: return "M2";
    case ScenarioId::M3: return "M3";
    case ScenarioId::M4: return "M4";
  }
  return "?";
}

std::optional<ScenarioId> parse_scenario_name(const std::string& name) {
  for (ScenarioId id : {ScenarioId::M0, ScenarioId::M1, ScenarioId::M2, ScenarioId::M3,
                        ScenarioId::M4}) {
    if (scenario_name(id) == name) return id;
  }
  return std::nullopt;
}

ScenarioConfig scenario_config(ScenarioId id) {
  ScenarioConfig cfg;
  cfg.id = id;
  const auto T = CovariateSource::transformed;
  switch (id) {
    case ScenarioId::M0:
      break;
    case ScenarioId::M1:  // only lambda and tau correct
      cfg.sources.pi = cfg.sources.h = cfg.sources.omega = T;
      break;
    case ScenarioId::M2:  // only tau, H, omega correct
      cfg.sources.lambda = cfg.sources.pi = T;
      break;
    case ScenarioId::M3:  // only pi, H, omega correct
      cfg.sources.lambda = cfg.sources.tau = T;
      break;
    case ScenarioId::M4:  // nothing correct
      cfg.sources.pi = cfg.sources.lambda = cfg.sources.tau = cfg.sources.h =
          cfg.sources.omega = T;
      break;
  }
  return cfg;
}

MetricsSummary metrics(const std::vector<double>& estimates, double truth) {
  if (estimates.size() < 2) {
    throw Error(ErrorCode::DegenerateSample, "metrics need at least two estimates");
  }
  MetricsSummary out;
  const double m = mean(estimates);
  out.abs_bias = std::abs(m - truth);
  out.sd = sample_sd(estimates);
  out.mse = (m - truth) * (m - truth) + population_variance(estimates);
  out.rmse = std::sqrt(out.mse);
  return out;
}

AnalysisSpec scenario_analysis_spec(const ScenarioConfig& scenario) {
  AnalysisSpec spec;
  spec.lambda_formula = Formula::parse("1 + x1 + x2 + x3");
  spec.tau_formula = Formula::parse("1 + z + x1 + x2 + x3");
  spec.pi_formula = Formula::parse("1 + z + x1 + x2 + x3 + x1^2 + x2^2 + x3^2");
  spec.theta_formula = Formula::parse("1 + z + x1 + x2 + x3");
  spec.h_formula = Formula::parse("1 + x1 + x2 + x3");
  spec.omega_formula = Formula::parse("1 + x1 + x2 + x3");
  spec.sources = scenario.sources;
  return spec;
}

namespace {

struct ReplicateOutcome {
  std::vector<std::optional<double>> estimate;      // per kind
  std::vector<std::optional<double>> se_sandwich;   // per kind (if requested)
  double clamp_rate = 0.0;
  bool generated = false;
};

}  // namespace

MonteCarloReport run_scenario(const ScenarioConfig& scenario, const DgpParams& params, int n,
                              int reps, const std::vector<EstimatorKind>& kinds,
                              std::uint64_t seed, const RunOptions& options) {
  if (reps < 1) throw Error(ErrorCode::ConfigError, "need at least one replicate");
  const AnalysisSpec spec = scenario_analysis_spec(scenario);
  spec.validate_for(kinds);
  const int n_kinds = static_cast<int>(kinds.size());

  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(reps));

  auto run_replicate = [&](int k) {
    ReplicateOutcome& out = outcomes[static_cast<std::size_t>(k)];
    out.estimate.assign(static_cast<std::size_t>(n_kinds), std::nullopt);
    out.se_sandwich.assign(static_cast<std::size_t>(n_kinds), std::nullopt);
    SplitRng rng(seed, static_cast<std::uint64_t>(k));
    FusedSample sample = [&] {
      SimulatedSample sim = gen_fused(params, n, rng);
      out.clamp_rate = sim.clamp_rate;
      return misspecify(sim.sample, rng);
    }();
    out.generated = true;

    std::optional<FittedModels> models;
    try {
      models = fit_models(sample, spec, kinds);
    } catch (const Error&) {
      return;  // whole replicate fails; per-kind slots stay empty
    }
    for (int j = 0; j < n_kinds; ++j) {
      const EstimatorKind kind = kinds[static_cast<std::size_t>(j)];
      try {
        EstimateResult res = point_estimate(kind, sample, spec, *models);
        out.estimate[static_cast<std::size_t>(j)] = res.delta_hat;
        const bool want_se =
            options.with_sandwich &&
            (options.sandwich_kinds.empty() ||
             std::find(options.sandwich_kinds.begin(), options.sandwich_kinds.end(), kind) !=
                 options.sandwich_kinds.end());
        if (want_se) {
          const SandwichResult sw = sandwich_for(kind, sample, spec, *models, res.delta_hat);
          out.se_sandwich[static_cast<std::size_t>(j)] = sw.se_delta;
        }
      } catch (const Error&) {
        // recorded as a failure for this estimator
      }
    }
  };

  const int workers = std::max(1, options.parallelism);
  if (workers == 1) {
    for (int k = 0; k < reps; ++k) run_replicate(k);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int k = next.fetch_add(1); k < reps; k = next.fetch_add(1)) run_replicate(k);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  MonteCarloReport report;
  report.scenario = scenario_name(scenario.id);
  report.n = n;
  report.reps = reps;
  report.seed = seed;
  report.truth = params.delta_truth;

  double clamp_sum = 0.0;
  for (const ReplicateOutcome& out : outcomes) clamp_sum += out.clamp_rate;
  report.mean_clamp_rate = clamp_sum / static_cast<double>(reps);

  const double z = norm_quantile((1.0 + options.ci_level) / 2.0);
  for (int j = 0; j < n_kinds; ++j) {
    EstimatorSummary summary;
    summary.kind = kinds[static_cast<std::size_t>(j)];
    double se_sum = 0.0;
    int se_count = 0;
    int covered = 0;
    for (const ReplicateOutcome& out : outcomes) {
      const auto& est = out.estimate[static_cast<std::size_t>(j)];
      if (!est) {
        ++summary.failures;
        continue;
      }
      ++summary.successes;
      summary.estimates.push_back(*est);
      const auto& se = out.se_sandwich[static_cast<std::size_t>(j)];
      if (se) {
        se_sum += *se;
        ++se_count;
        if (std::abs(*est - params.delta_truth) <= z * *se) ++covered;
      }
    }
    if (summary.failures > static_cast<int>(options.abort_failure_share * reps)) {
      throw Error(ErrorCode::TooManyFailures,
                  "estimator '" + estimator_name(summary.kind) + "' failed on " +
                      std::to_string(summary.failures) + "/" + std::to_string(reps) +
                      " replicates");
    }
    if (summary.successes >= 2) {
      summary.mean = mean(summary.estimates);
      summary.metric = metrics(summary.estimates, params.delta_truth);
    }
    if (se_count > 0) {
      summary.mean_se_sandwich = se_sum / se_count;
      summary.ci_coverage = static_cast<double>(covered) / se_count;
    }
    report.estimators.push_back(std::move(summary));
  }
  return report;
}

std::string render_report_table(const std::vector<MonteCarloReport>& reports) {
  if (reports.empty()) return "";
  std::ostringstream out;
  char buf[64];
  const auto& kinds = reports.front().estimators;
  auto header = [&] {
    out << "model   ";
    for (const auto& e : kinds) {
      std::snprintf(buf, sizeof(buf), "%16s", estimator_name(e.kind).c_str());
      out << buf;
    }
    out << "\n";
  };
  out << "|Bias| (SD)\n";
  header();
  for (const auto& rep : reports) {
    std::snprintf(buf, sizeof(buf), "%-8s", rep.scenario.c_str());
    out << buf;
    for (const auto& e : rep.estimators) {
      std::snprintf(buf, sizeof(buf), "%8.2f (%5.2f)", e.metric.abs_bias, e.metric.sd);
      out << buf;
    }
    out << "\n";
  }
  out << "MSE\n";
  header();
  for (const auto& rep : reports) {
    std::snprintf(buf, sizeof(buf), "%-8s", rep.scenario.c_str());
    out << buf;
    for (const auto& e : rep.estimators) {
      std::snprintf(buf, sizeof(buf), "%16.2f", e.metric.mse);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace fusioniv
