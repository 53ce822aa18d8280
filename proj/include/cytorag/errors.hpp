#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cytorag {

enum class ErrorCode {
  InvalidArgument,
  DuplicateEncoder,
  InvalidDimension,
  UnknownEncoder,
  DimensionMismatch,
  NonFiniteVector,
  ZeroNormVector,
  InvalidMetadata,
  UnknownCase,
  FormatError,
  IoError,
  VersionError,
  EmptyQuery,
  EmptyContext,
  TemplateError,
  EndpointUnreachable,
  EndpointError,
  Timeout,
  MissingEmbedding,
  NoEligibleNeighbors,
  EmptyEvaluationSet,
  DegenerateLabels,
  StoreLoadError,
  PortInUse,
  Unavailable,
};

/// Stable snake_case identifier used in CLI error lines and API error bodies.
std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view code_name() const noexcept { return error_code_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace cytorag
