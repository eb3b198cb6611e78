#include <CLI11.hpp>
#include <cstdlib>
#include <optional>
#include <string>

#include "fusioniv/cli_run.hpp"

namespace {

std::optional<int> env_threads() {
  const char* v = std::getenv("FUSION_IV_THREADS");
  if (!v) return std::nullopt;
  const int k = std::atoi(v);
  return k >= 1 ? std::optional<int>(k) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-sample instrumental-variable estimation of average treatment effects"};
  app.require_subcommand(1);

  std::string data_path, config_path, out_path, format;

  CLI::App* estimate = app.add_subcommand("estimate", "Run the estimator battery on a fused CSV");
  estimate->add_option("--data", data_path, "fused CSV (r,y,d,z,x1..xp)")->required();
  estimate->add_option("--config", config_path, "JSON model configuration")->required();
  estimate->add_option("--out", out_path, "output path (stdout if omitted)");
  estimate->add_option("--format", format, "json|tsv|text");

  std::string sim_config, sim_out;
  int threads = 0;
  CLI::App* simulate = app.add_subcommand("simulate", "Run Monte Carlo scenarios");
  simulate->add_option("--config", sim_config, "JSON simulation configuration")->required();
  simulate->add_option("--out", sim_out, "output path (stdout if omitted)");
  simulate->add_option("--threads", threads, "worker threads (overrides config)");

  CLI11_PARSE(app, argc, argv);

  if (estimate->parsed()) {
    return fusioniv::cmd_estimate(data_path, config_path,
                                  out_path.empty() ? std::nullopt
                                                   : std::optional<std::string>(out_path),
                                  format.empty() ? std::nullopt
                                                 : std::optional<std::string>(format));
  }
  std::optional<int> threads_opt;
  if (threads >= 1) {
    threads_opt = threads;
  } else if (auto env = env_threads()) {
    threads_opt = env;
  }
  return fusioniv::cmd_simulate(sim_config,
                                sim_out.empty() ? std::nullopt
                                                : std::optional<std::string>(sim_out),
                                threads_opt);
}
