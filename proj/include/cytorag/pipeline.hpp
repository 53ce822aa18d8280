#pragma once

#include <string_view>
#include <vector>

#include "cytorag/evaluation.hpp"
#include "cytorag/prompt.hpp"

namespace cytorag {

struct CasePrompt {
  PromptBundle bundle;
  std::vector<ScoredNeighbor> neighbors;
};

/// Retrieves k neighbors of a stored case under `model` and renders them
/// into a prompt. Throws UnknownCase plus anything retrieval or
/// assemble_prompt throws.
CasePrompt build_case_prompt(const StoreSnapshot& snapshot, std::string_view case_id,
                             const Model& model, std::size_t k, ExclusionMode exclusion,
                             const PromptTemplate& tmpl, std::size_t pool_k = 0);

std::vector<RetrievedExample> to_examples(std::span<const ScoredNeighbor> neighbors,
                                          const StoreSnapshot& snapshot);

}  // namespace cytorag
