#pragma once

#include <stdexcept>
#include <string>

namespace fusioniv {

enum class ErrorCode {
  // input / validation
  SyntaxError,
  DuplicateTerm,
  IndexOutOfRange,
  InvalidFormula,
  SchemaError,
  ConsistencyError,
  ParseError,
  DegenerateSample,
  MissingTransformed,
  IoError,
  ConfigError,
  // numerical / estimation
  Separation,
  SingularInformation,
  SingularDesign,
  SingularSystem,
  NotConverged,
  WeakInstrument,
  MissingNuisance,
  SingularBread,
  TooManyFailures,
  AssumptionViolated,
};

const char* error_code_name(ErrorCode code);

// True for errors caused by bad user input (CLI exit code 2); the rest are
// estimation-time failures (exit code 3).
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const { return code_; }
  const std::string& message() const { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace fusioniv
