#include "cytorag/pipeline.hpp"

#include "cytorag/errors.hpp"

namespace cytorag {

std::vector<RetrievedExample> to_examples(std::span<const ScoredNeighbor> neighbors,
                                          const StoreSnapshot& snapshot) {
  std::vector<RetrievedExample> out;
  out.reserve(neighbors.size());
  for (const auto& n : neighbors) {
    const CaseRecord* c = snapshot.find(n.case_id);
    if (!c) throw Error(ErrorCode::UnknownCase, "unknown case '" + n.case_id + "'");
    out.push_back({n.rank, n.score, c->metadata.cytology_diagnosis, c->metadata.bethesda,
                   c->metadata.interpretation});
  }
  return out;
}

CasePrompt build_case_prompt(const StoreSnapshot& snapshot, std::string_view case_id,
                             const Model& model, std::size_t k, ExclusionMode exclusion,
                             const PromptTemplate& tmpl, std::size_t pool_k) {
  const CaseRecord* query = snapshot.find(case_id);
  if (!query) throw Error(ErrorCode::UnknownCase, "unknown case '" + std::string(case_id) + "'");
  CasePrompt out;
  out.neighbors = retrieve_for_case(*query, model, k, snapshot,
                                    ExclusionFilter::for_case(exclusion, query->case_id), pool_k);
  const auto examples = to_examples(out.neighbors, snapshot);
  out.bundle = assemble_prompt(query_info_from(*query), examples, tmpl);
  return out;
}

}  // namespace cytorag
