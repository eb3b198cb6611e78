#include "fusioniv/cli_run.hpp"

#include <cstdio>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "fusioniv/bootstrap.hpp"
#include "fusioniv/csv.hpp"
#include "fusioniv/error.hpp"
#include "fusioniv/stacked.hpp"
#include "fusioniv/stats.hpp"

namespace fusioniv {

using nlohmann::json;

namespace {

void report_error(std::ostream& err, const Error& e) {
  json j{{"error", {{"code", error_code_name(e.code())}, {"message", e.message()}}}};
  err << j.dump() << "\n";
}

int exit_code_for(const Error& e) {
  return is_validation_error(e.code()) ? kExitValidation : kExitEstimation;
}

struct EstimateRow {
  EstimateResult result;
};

json estimate_report_json(const FusedSample& sample, const EstimateConfig& cfg,
                          const std::vector<EstimateRow>& rows) {
  json out;
  out["meta"] = {{"n", sample.n()},
                 {"n_primary", sample.n_primary()},
                 {"n_auxiliary", sample.n_auxiliary()},
                 {"q_hat", sample.q_hat()},
                 {"seed", cfg.seed},
                 {"ci_level", cfg.ci_level}};
  json list = json::array();
  for (const EstimateRow& row : rows) {
    const EstimateResult& r = row.result;
    json item{{"estimator", estimator_name(r.kind)}, {"estimate", r.delta_hat}};
    if (r.se_sandwich) item["se_sandwich"] = *r.se_sandwich;
    if (r.se_boot) item["se_boot"] = *r.se_boot;
    if (r.ci) item["ci"] = {{"lo", r.ci->lo}, {"hi", r.ci->hi}, {"level", r.ci->level}};
    json diag;
    if (std::isfinite(r.diagnostics.min_tau_gap)) {
      diag["weak_instrument_margin"] = r.diagnostics.min_tau_gap;
    }
    diag["pi_clamp_count"] = r.diagnostics.pi_clamps;
    diag["solver_iterations"] = r.diagnostics.solver_iterations;
    item["diagnostics"] = diag;
    list.push_back(item);
  }
  out["estimates"] = list;
  return out;
}

std::string render_estimate_text(const std::vector<EstimateRow>& rows, double level) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %12s %12s %12s %22s\n", "estimator", "estimate",
                "se", "se_boot", (std::to_string(static_cast<int>(level * 100)) +
                                  "% Wald CI").c_str());
  out << buf;
  for (const EstimateRow& row : rows) {
    const EstimateResult& r = row.result;
    std::string se = "-", seb = "-", ci = "-";
    if (r.se_sandwich) {
      std::snprintf(buf, sizeof(buf), "%.4f", *r.se_sandwich);
      se = buf;
    }
    if (r.se_boot) {
      std::snprintf(buf, sizeof(buf), "%.4f", *r.se_boot);
      seb = buf;
    }
    if (r.ci) {
      std::snprintf(buf, sizeof(buf), "(%.4f, %.4f)", r.ci->lo, r.ci->hi);
      ci = buf;
    }
    std::snprintf(buf, sizeof(buf), "%-10s %12.4f %12s %12s %22s\n",
                  estimator_name(r.kind).c_str(), r.delta_hat, se.c_str(), seb.c_str(),
                  ci.c_str());
    out << buf;
  }
  out << "\ndiagnostics\n";
  for (const EstimateRow& row : rows) {
    const EstimateResult& r = row.result;
    std::string margin = "-";
    if (std::isfinite(r.diagnostics.min_tau_gap)) {
      std::snprintf(buf, sizeof(buf), "%.4g", r.diagnostics.min_tau_gap);
      margin = buf;
    }
    std::snprintf(buf, sizeof(buf), "%-10s weak-instrument margin %-10s clamped probabilities %ld\n",
                  estimator_name(r.kind).c_str(), margin.c_str(),
                  r.diagnostics.pi_clamps + r.diagnostics.lambda_clamps +
                      r.diagnostics.tau_clamps);
    out << buf;
  }
  return out.str();
}

std::string render_estimate_tsv(const std::vector<EstimateRow>& rows) {
  std::ostringstream out;
  out << "estimator\testimate\tse_sandwich\tse_boot\tci_lo\tci_hi\n";
  char buf[64];
  auto num = [&](std::optional<double> v) {
    if (!v) return std::string("");
    std::snprintf(buf, sizeof(buf), "%.10g", *v);
    return std::string(buf);
  };
  for (const EstimateRow& row : rows) {
    const EstimateResult& r = row.result;
    out << estimator_name(r.kind) << "\t";
    std::snprintf(buf, sizeof(buf), "%.10g", r.delta_hat);
    out << buf << "\t" << num(r.se_sandwich) << "\t" << num(r.se_boot) << "\t";
    out << (r.ci ? num(r.ci->lo) : "") << "\t" << (r.ci ? num(r.ci->hi) : "") << "\n";
  }
  return out.str();
}

void emit(const std::string& content, const std::optional<std::string>& out_path,
          std::ostream& out) {
  if (out_path) {
    write_text_file_atomic(*out_path, content);
  } else {
    out << content;
  }
}

}  // namespace

int cmd_estimate(const std::string& data_path, const std::string& config_path,
                 const std::optional<std::string>& out_path,
                 const std::optional<std::string>& format_override, CliIo io) {
  std::ostream& out = io.out ? *io.out : std::cout;
  std::ostream& err = io.err ? *io.err : std::cerr;

  EstimateConfig cfg;
  std::optional<FusedSample> sample;
  std::optional<AnalysisSpec> spec;
  try {
    cfg = EstimateConfig::from_json_text(read_text_file(config_path));
    if (format_override) {
      const auto fmt = parse_output_format(*format_override);
      if (!fmt) throw Error(ErrorCode::ConfigError, "unknown format '" + *format_override + "'");
      cfg.format = *fmt;
    }
    sample = read_fused_csv(data_path);
    spec = cfg.to_analysis_spec();
  } catch (const Error& e) {
    report_error(err, e);
    return exit_code_for(e);
  }

  std::vector<EstimateRow> rows;
  try {
    const FittedModels models = fit_models(*sample, *spec, cfg.estimators);
    for (EstimatorKind kind : cfg.estimators) {
      EstimateRow row;
      row.result = point_estimate(kind, *sample, *spec, models);
      const SandwichResult sw = sandwich_for(kind, *sample, *spec, models, row.result.delta_hat);
      row.result.se_sandwich = sw.se_delta;
      const auto [lo, hi] = wald_ci(row.result.delta_hat, sw.se_delta, cfg.ci_level);
      row.result.ci = ConfidenceInterval{lo, hi, cfg.ci_level};
      if (cfg.bootstrap_replicates > 0) {
        BootstrapOptions bopt;
        bopt.replicates = cfg.bootstrap_replicates;
        bopt.seed = cfg.seed;
        bopt.ci_level = cfg.ci_level;
        bopt.stratified = cfg.stratified_bootstrap;
        bopt.parallelism = cfg.threads;
        const AnalysisSpec& spec_ref = *spec;
        const BootstrapResult boot = bootstrap(
            *sample,
            [kind, &spec_ref](const FusedSample& s) {
              return fit_and_estimate(kind, s, spec_ref).delta_hat;
            },
            bopt);
        row.result.se_boot = boot.se_boot;
      }
      rows.push_back(std::move(row));
    }
  } catch (const Error& e) {
    report_error(err, e);
    return exit_code_for(e);
  }

  try {
    std::string content;
    switch (cfg.format) {
      case OutputFormat::json:
        content = estimate_report_json(*sample, cfg, rows).dump(2) + "\n";
        break;
      case OutputFormat::tsv:
        content = render_estimate_tsv(rows);
        break;
      case OutputFormat::text:
        content = render_estimate_text(rows, cfg.ci_level);
        break;
    }
    emit(content, out_path, out);
  } catch (const Error& e) {
    report_error(err, e);
    return exit_code_for(e);
  }
  return kExitOk;
}

namespace {

json simulate_report_json(const std::vector<MonteCarloReport>& reports) {
  json out = json::array();
  for (const MonteCarloReport& rep : reports) {
    json jr{{"scenario", rep.scenario}, {"n", rep.n},       {"replicates", rep.reps},
            {"seed", rep.seed},         {"truth", rep.truth}, {"mean_clamp_rate", rep.mean_clamp_rate}};
    json est = json::array();
    for (const EstimatorSummary& s : rep.estimators) {
      json je{{"estimator", estimator_name(s.kind)},
              {"successes", s.successes},
              {"failures", s.failures},
              {"mean", s.mean},
              {"abs_bias", s.metric.abs_bias},
              {"mc_sd", s.metric.sd},
              {"mse", s.metric.mse},
              {"rmse", s.metric.rmse}};
      if (s.mean_se_sandwich) je["mean_se_sandwich"] = *s.mean_se_sandwich;
      if (s.ci_coverage) je["ci_coverage"] = *s.ci_coverage;
      est.push_back(je);
    }
    jr["estimators"] = est;
    out.push_back(jr);
  }
  return out;
}

std::string simulate_report_tsv(const std::vector<MonteCarloReport>& reports) {
  std::ostringstream out;
  out << "scenario\testimator\tn\treplicates\tabs_bias\tmc_sd\tmse\trmse\tfailures\n";
  char buf[64];
  for (const MonteCarloReport& rep : reports) {
    for (const EstimatorSummary& s : rep.estimators) {
      out << rep.scenario << "\t" << estimator_name(s.kind) << "\t" << rep.n << "\t"
          << rep.reps;
      for (double v : {s.metric.abs_bias, s.metric.sd, s.metric.mse, s.metric.rmse}) {
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        out << "\t" << buf;
      }
      out << "\t" << s.failures << "\n";
    }
  }
  return out.str();
}

}  // namespace

int cmd_simulate(const std::string& config_path, const std::optional<std::string>& out_path,
                 std::optional<int> threads_override, CliIo io) {
  std::ostream& out = io.out ? *io.out : std::cout;
  std::ostream& err = io.err ? *io.err : std::cerr;

  SimulateConfig cfg;
  try {
    cfg = SimulateConfig::from_json_text(read_text_file(config_path));
    if (threads_override) {
      if (*threads_override < 1) throw Error(ErrorCode::ConfigError, "threads must be >= 1");
      cfg.threads = *threads_override;
    }
  } catch (const Error& e) {
    report_error(err, e);
    return exit_code_for(e);
  }

  std::vector<MonteCarloReport> reports;
  try {
    const DgpParams params;
    RunOptions opts;
    opts.parallelism = cfg.threads;
    opts.with_sandwich = cfg.with_sandwich;
    opts.ci_level = cfg.ci_level;
    for (ScenarioId id : cfg.scenarios) {
      reports.push_back(run_scenario(scenario_config(id), params, cfg.n, cfg.replicates,
                                     cfg.estimators, cfg.seed, opts));
    }
  } catch (const Error& e) {
    report_error(err, e);
    return exit_code_for(e);
  }

  try {
    std::string content;
    switch (cfg.format) {
      case OutputFormat::json:
        content = simulate_report_json(reports).dump(2) + "\n";
        break;
      case OutputFormat::tsv:
        content = simulate_report_tsv(reports);
        break;
      case OutputFormat::text:
        content = render_report_table(reports);
        break;
    }
    emit(content, out_path, out);
  } catch (const Error& e) {
    report_error(err, e);
    return exit_code_for(e);
  }
  return kExitOk;
}

}  // namespace fusioniv
