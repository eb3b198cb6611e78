#include "fusioniv/error.hpp"

namespace fusioniv {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::DuplicateTerm: return "DuplicateTerm";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidFormula: return "InvalidFormula";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::ConsistencyError: return "ConsistencyError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::MissingTransformed: return "MissingTransformed";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::Separation: return "Separation";
    case ErrorCode::SingularInformation: return "SingularInformation";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::WeakInstrument: return "WeakInstrument";
    case ErrorCode::MissingNuisance: return "MissingNuisance";
    case ErrorCode::SingularBread: return "SingularBread";
    case ErrorCode::TooManyFailures: return "TooManyFailures";
    case ErrorCode::AssumptionViolated: return "AssumptionViolated";
  }
  return "UnknownError";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::SyntaxError:
    case ErrorCode::DuplicateTerm:
    case ErrorCode::IndexOutOfRange:
    case ErrorCode::InvalidFormula:
    case ErrorCode::SchemaError:
    case ErrorCode::ConsistencyError:
    case ErrorCode::ParseError:
    case ErrorCode::DegenerateSample:
    case ErrorCode::MissingTransformed:
    case ErrorCode::IoError:
    case ErrorCode::ConfigError:
      return true;
    default:
      return false;
  }
}

}  // namespace fusioniv
