#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fusioniv/analysis.hpp"
#include "fusioniv/scenario.hpp"

namespace fusioniv {

enum class OutputFormat { json, tsv, text };
std::optional<OutputFormat> parse_output_format(const std::string& name);

// `estimate` subcommand configuration. Seeds are mandatory: reproducibility
// is part of the contract, so there is no silent clock fallback.
struct EstimateConfig {
  std::optional<std::string> pi, lambda, tau, theta, h, omega;  // formula strings
  HLink h_link = HLink::identity;
  std::vector<EstimatorKind> estimators;
  int bootstrap_replicates = 0;
  bool stratified_bootstrap = false;
  double ci_level = 0.95;
  std::uint64_t seed = 0;
  OutputFormat format = OutputFormat::text;
  int threads = 1;

  static EstimateConfig from_json_text(const std::string& text);
  std::string to_json_text() const;

  AnalysisSpec to_analysis_spec() const;  // parses formulas; validates
};

struct SimulateConfig {
  std::vector<ScenarioId> scenarios;
  int n = 10000;
  int replicates = 1000;
  std::vector<EstimatorKind> estimators;
  std::uint64_t seed = 0;
  int threads = 1;
  bool with_sandwich = false;
  double ci_level = 0.95;
  OutputFormat format = OutputFormat::text;

  static SimulateConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

std::string read_text_file(const std::string& path);
// write-to-temp then rename; no partial files on failure
void write_text_file_atomic(const std::string& path, const std::string& content);

}  // namespace fusioniv
