#include "cytorag/errors.hpp"

namespace cytorag {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::DuplicateEncoder: return "duplicate_encoder";
    case ErrorCode::InvalidDimension: return "invalid_dimension";
    case ErrorCode::UnknownEncoder: return "unknown_encoder";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::NonFiniteVector: return "non_finite_vector";
    case ErrorCode::ZeroNormVector: return "zero_norm_vector";
    case ErrorCode::InvalidMetadata: return "invalid_metadata";
    case ErrorCode::UnknownCase: return "unknown_case";
    case ErrorCode::FormatError: return "format_error";
    case ErrorCode::IoError: return "io_error";
    case ErrorCode::VersionError: return "version_error";
    case ErrorCode::EmptyQuery: return "empty_query";
    case ErrorCode::EmptyContext: return "empty_context";
    case ErrorCode::TemplateError: return "template_error";
    case ErrorCode::EndpointUnreachable: return "endpoint_unreachable";
    case ErrorCode::EndpointError: return "endpoint_error";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::MissingEmbedding: return "missing_embedding";
    case ErrorCode::NoEligibleNeighbors: return "no_eligible_neighbors";
    case ErrorCode::EmptyEvaluationSet: return "empty_evaluation_set";
    case ErrorCode::DegenerateLabels: return "degenerate_labels";
    case ErrorCode::StoreLoadError: return "store_load_error";
    case ErrorCode::PortInUse: return "port_in_use";
    case ErrorCode::Unavailable: return "unavailable";
  }
  return "unknown";
}

}  // namespace cytorag
