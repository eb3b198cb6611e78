#include "fusioniv/config.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "fusioniv/error.hpp"

namespace fusioniv {

using nlohmann::json;

std::optional<OutputFormat> parse_output_format(const std::string& name) {
  if (name == "json") return OutputFormat::json;
  if (name == "tsv") return OutputFormat::tsv;
  if (name == "text") return OutputFormat::text;
  return std::nullopt;
}

namespace {

std::string format_name(OutputFormat f) {
  switch (f) {
    case OutputFormat::json: return "json";
    case OutputFormat::tsv: return "tsv";
    case OutputFormat::text: return "text";
  }
  return "text";
}

json parse_json(const std::string& text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw Error(ErrorCode::ConfigError, "config is not valid JSON");
  return j;
}

std::vector<EstimatorKind> parse_kind_list(const json& j) {
  if (!j.is_array() || j.empty()) {
    throw Error(ErrorCode::ConfigError, "'estimators' must be a nonempty array");
  }
  std::vector<EstimatorKind> kinds;
  for (const auto& item : j) {
    if (!item.is_string()) throw Error(ErrorCode::ConfigError, "estimator names must be strings");
    const auto kind = parse_estimator_name(item.get<std::string>());
    if (!kind) {
      throw Error(ErrorCode::ConfigError, "unknown estimator '" + item.get<std::string>() + "'");
    }
    kinds.push_back(*kind);
  }
  return kinds;
}

std::uint64_t require_seed(const json& j) {
  if (!j.contains("seed") || !j["seed"].is_number_unsigned()) {
    throw Error(ErrorCode::ConfigError, "config requires an unsigned integer 'seed'");
  }
  return j["seed"].get<std::uint64_t>();
}

double read_level(const json& j) {
  const double level = j.value("ci_level", 0.95);
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorCode::ConfigError, "'ci_level' must lie in (0,1)");
  }
  return level;
}

OutputFormat read_format(const json& j) {
  const std::string name = j.value("format", std::string("text"));
  const auto fmt = parse_output_format(name);
  if (!fmt) throw Error(ErrorCode::ConfigError, "unknown output format '" + name + "'");
  return *fmt;
}

}  // namespace

EstimateConfig EstimateConfig::from_json_text(const std::string& text) {
  const json j = parse_json(text);
  EstimateConfig cfg;
  if (j.contains("formulas")) {
    const json& f = j["formulas"];
    if (!f.is_object()) throw Error(ErrorCode::ConfigError, "'formulas' must be an object");
    auto grab = [&](const char* key, std::optional<std::string>& out) {
      if (f.contains(key)) {
        if (!f[key].is_string()) {
          throw Error(ErrorCode::ConfigError, std::string("formula '") + key + "' must be a string");
        }
        out = f[key].get<std::string>();
      }
    };
    grab("pi", cfg.pi);
    grab("lambda", cfg.lambda);
    grab("tau", cfg.tau);
    grab("theta", cfg.theta);
    grab("h", cfg.h);
    grab("omega", cfg.omega);
  }
  const std::string link = j.value("h_link", std::string("identity"));
  if (link == "identity") {
    cfg.h_link = HLink::identity;
  } else if (link == "tanh") {
    cfg.h_link = HLink::tanh_link;
  } else {
    throw Error(ErrorCode::ConfigError, "'h_link' must be 'identity' or 'tanh'");
  }
  if (!j.contains("estimators")) {
    throw Error(ErrorCode::ConfigError, "config requires 'estimators'");
  }
  cfg.estimators = parse_kind_list(j["estimators"]);
  cfg.bootstrap_replicates = j.value("bootstrap_replicates", 0);
  if (cfg.bootstrap_replicates < 0) {
    throw Error(ErrorCode::ConfigError, "'bootstrap_replicates' must be >= 0");
  }
  cfg.stratified_bootstrap = j.value("stratified_bootstrap", false);
  cfg.ci_level = read_level(j);
  cfg.seed = require_seed(j);
  cfg.format = read_format(j);
  cfg.threads = j.value("threads", 1);
  if (cfg.threads < 1) throw Error(ErrorCode::ConfigError, "'threads' must be >= 1");
  return cfg;
}

std::string EstimateConfig::to_json_text() const {
  json f = json::object();
  auto put = [&](const char* key, const std::optional<std::string>& v) {
    if (v) f[key] = *v;
  };
  put("pi", pi);
  put("lambda", lambda);
  put("tau", tau);
  put("theta", theta);
  put("h", h);
  put("omega", omega);
  json j{{"formulas", f},
         {"h_link", h_link == HLink::tanh_link ? "tanh" : "identity"},
         {"bootstrap_replicates", bootstrap_replicates},
         {"stratified_bootstrap", stratified_bootstrap},
         {"ci_level", ci_level},
         {"seed", seed},
         {"format", format_name(format)},
         {"threads", threads}};
  json kinds = json::array();
  for (EstimatorKind kind : estimators) kinds.push_back(estimator_name(kind));
  j["estimators"] = kinds;
  return j.dump(2);
}

AnalysisSpec EstimateConfig::to_analysis_spec() const {
  AnalysisSpec spec;
  auto parse_opt = [](const std::optional<std::string>& text) -> std::optional<Formula> {
    if (!text) return std::nullopt;
    return Formula::parse(*text);
  };
  spec.pi_formula = parse_opt(pi);
  spec.lambda_formula = parse_opt(lambda);
  spec.tau_formula = parse_opt(tau);
  spec.theta_formula = parse_opt(theta);
  spec.h_formula = parse_opt(h);
  spec.omega_formula = parse_opt(omega);
  spec.h_link = h_link;
  spec.validate_for(estimators);
  return spec;
}

SimulateConfig SimulateConfig::from_json_text(const std::string& text) {
  const json j = parse_json(text);
  SimulateConfig cfg;
  if (!j.contains("scenarios") || !j["scenarios"].is_array() || j["scenarios"].empty()) {
    throw Error(ErrorCode::ConfigError, "config requires a nonempty 'scenarios' array");
  }
  for (const auto& item : j["scenarios"]) {
    if (!item.is_string()) throw Error(ErrorCode::ConfigError, "scenario names must be strings");
    const auto id = parse_scenario_name(item.get<std::string>());
    if (!id) {
      throw Error(ErrorCode::ConfigError, "unknown scenario '" + item.get<std::string>() + "'");
    }
    cfg.scenarios.push_back(*id);
  }
  cfg.n = j.value("n", 10000);
  if (cfg.n < 10) throw Error(ErrorCode::ConfigError, "'n' must be >= 10");
  cfg.replicates = j.value("replicates", 1000);
  if (cfg.replicates < 1) throw Error(ErrorCode::ConfigError, "'replicates' must be >= 1");
  if (!j.contains("estimators")) {
    throw Error(ErrorCode::ConfigError, "config requires 'estimators'");
  }
  cfg.estimators = parse_kind_list(j["estimators"]);
  cfg.seed = require_seed(j);
  cfg.threads = j.value("threads", 1);
  if (cfg.threads < 1) throw Error(ErrorCode::ConfigError, "'threads' must be >= 1");
  cfg.with_sandwich = j.value("with_sandwich", false);
  cfg.ci_level = read_level(j);
  cfg.format = read_format(j);
  return cfg;
}

std::string SimulateConfig::to_json_text() const {
  json j{{"n", n},
         {"replicates", replicates},
         {"seed", seed},
         {"threads", threads},
         {"with_sandwich", with_sandwich},
         {"ci_level", ci_level},
         {"format", format_name(format)}};
  json sc = json::array();
  for (ScenarioId id : scenarios) sc.push_back(scenario_name(id));
  j["scenarios"] = sc;
  json kinds = json::array();
  for (EstimatorKind kind : estimators) kinds.push_back(estimator_name(kind));
  j["estimators"] = kinds;
  return j.dump(2);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + tmp + "' for writing");
    out << content;
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::IoError, "cannot move output into place: " + ec.message());
  }
}

}  // namespace fusioniv
