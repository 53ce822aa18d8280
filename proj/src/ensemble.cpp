#include "cytorag/ensemble.hpp"

#include <algorithm>

#include "cytorag/errors.hpp"

namespace cytorag {

std::string_view to_string(FusionMode mode) noexcept {
  return mode == FusionMode::RawScorePool ? "raw" : "rrf";
}

std::optional<FusionMode> parse_fusion_mode(std::string_view text) {
  if (text == "raw") return FusionMode::RawScorePool;
  if (text == "rrf") return FusionMode::ReciprocalRankFusion;
  return std::nullopt;
}

std::vector<FusedNeighbor> fuse(const std::map<EncoderId, std::vector<Neighbor>>& lists,
                                std::size_t k, FusionMode mode) {
  std::map<std::string, FusedNeighbor> pooled;
  for (const auto& [encoder, neighbors] : lists) {
    for (const auto& n : neighbors) {
      auto [it, inserted] = pooled.try_emplace(n.case_id);
      FusedNeighbor& f = it->second;
      if (inserted) f.case_id = n.case_id;
      const double contribution =
          mode == FusionMode::RawScorePool ? n.score
                                           : 1.0 / (kRrfConstant + static_cast<double>(n.rank));
      if (mode == FusionMode::RawScorePool) {
        f.fused_score = inserted ? contribution : std::max(f.fused_score, contribution);
      } else {
        f.fused_score += contribution;
      }
      f.contributing.push_back({encoder, n.score, n.rank});
    }
  }

  std::vector<FusedNeighbor> out;
  out.reserve(pooled.size());
  for (auto& [id, f] : pooled) out.push_back(std::move(f));
  // `pooled` iterates in case_id order, so stable_sort keeps the tie-break.
  std::stable_sort(out.begin(), out.end(), [](const FusedNeighbor& a, const FusedNeighbor& b) {
    return a.fused_score > b.fused_score;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

std::vector<FusedNeighbor> ensemble_top_k(const std::map<EncoderId, Vector>& queries,
                                          std::size_t k, FusionMode mode,
                                          const ExclusionFilter& filter,
                                          const StoreSnapshot& snapshot, std::size_t pool_k,
                                          Execution exec) {
  if (queries.empty()) throw Error(ErrorCode::EmptyQuery, "no query embeddings supplied");
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (pool_k == 0) pool_k = k;
  if (pool_k < k) throw Error(ErrorCode::InvalidArgument, "pool_k must be >= k");

  std::map<EncoderId, std::vector<Neighbor>> lists;
  for (const auto& [encoder, vector] : queries) {
    if (!snapshot.registry().contains(encoder)) {
      throw Error(ErrorCode::UnknownEncoder, "encoder '" + encoder.str() + "' is not registered");
    }
    lists.emplace(encoder, top_k(Embedding{encoder, vector}, pool_k, filter, snapshot, exec));
  }
  return fuse(lists, k, mode);
}

}  // namespace cytorag
