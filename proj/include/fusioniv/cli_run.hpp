#pragma once

#include <optional>
#include <string>

#include "fusioniv/config.hpp"

namespace fusioniv {

// Exit codes: 0 success, 2 validation error, 3 estimation error. Errors are
// reported as JSON objects on stderr.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitEstimation = 3;

struct CliIo {
  std::ostream* out = nullptr;  // defaults to std::cout
  std::ostream* err = nullptr;  // defaults to std::cerr
};

int cmd_estimate(const std::string& data_path, const std::string& config_path,
                 const std::optional<std::string>& out_path,
                 const std::optional<std::string>& format_override, CliIo io = {});

int cmd_simulate(const std::string& config_path, const std::optional<std::string>& out_path,
                 std::optional<int> threads_override, CliIo io = {});

}  // namespace fusioniv
