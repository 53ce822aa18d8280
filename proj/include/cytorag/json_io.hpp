#pragma once

// JSON conversions shared by the JSONL corpus format, the HTTP service and
// the CLI. Numbers are emitted with shortest round-trip formatting so every
// printed value re-parses to the same binary value.

#include <string>
#include <string_view>

#include "cytorag/ensemble.hpp"
#include "cytorag/prompt.hpp"
#include "cytorag/retrieval.hpp"
#include "cytorag/types.hpp"
#include "json.hpp"

namespace cytorag {

using Json = nlohmann::json;

std::string format_float(float value);
std::string format_double(double value);

/// Metadata JSONL object (no embeddings). Throws InvalidMetadata on missing
/// or ill-typed fields.
Json metadata_to_json(const CaseRecord& record);
CaseRecord metadata_from_json(const Json& j);

struct EmbeddingLine {
  std::string case_id;
  Embedding embedding;
};

/// {"case_id", "encoder", "dim", "vector"}; dim must equal the vector length.
EmbeddingLine embedding_from_json(const Json& j);

/// One JSONL line (no trailing newline) with components printed as shortest
/// binary32 decimals.
std::string embedding_jsonl_line(std::string_view case_id, const EncoderId& encoder,
                                 const Vector& vector);

/// Full record including embeddings, for GET /v1/cases/{id}.
Json case_to_json(const CaseRecord& record);

Json to_json(const Neighbor& n);
Json to_json(const FusedNeighbor& n);
Json to_json(const PromptBundle& bundle);
PromptBundle bundle_from_json(const Json& j);

}  // namespace cytorag
