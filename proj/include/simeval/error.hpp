#pragma once

#include <stdexcept>
#include <string>

namespace simeval {

// Error categories map onto CLI exit codes:
//   Validation -> 2, Gate* -> 3, Config/InvalidArgument -> 4, Io -> 5.
// Metric-level categories surface as flagged entries in reports when callers
// choose to catch them.
enum class ErrorCode {
  Io,
  Config,
  InvalidArgument,
  Parse,
  Validation,
  SchemaVersionUnsupported,
  GateNoQrels,
  GateNoSessionStructure,
  EmptyDistribution,
  ConstantVector,
  UnpairedSessions,
  Inapplicable,
  InsufficientData,
  Internal,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::Io: return "IO";
    case ErrorCode::Config: return "CONFIG";
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::Parse: return "PARSE";
    case ErrorCode::Validation: return "VALIDATION";
    case ErrorCode::SchemaVersionUnsupported: return "SCHEMA_VERSION_UNSUPPORTED";
    case ErrorCode::GateNoQrels: return "GATE_NO_QRELS";
    case ErrorCode::GateNoSessionStructure: return "GATE_NO_SESSION_STRUCTURE";
    case ErrorCode::EmptyDistribution: return "EMPTY_DISTRIBUTION";
    case ErrorCode::ConstantVector: return "CONSTANT_VECTOR";
    case ErrorCode::UnpairedSessions: return "UNPAIRED_SESSIONS";
    case ErrorCode::Inapplicable: return "INAPPLICABLE";
    case ErrorCode::InsufficientData: return "INSUFFICIENT_DATA";
    case ErrorCode::Internal: return "INTERNAL";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const { return code_; }
  const std::string& message() const { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace simeval
