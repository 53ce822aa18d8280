#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cytorag/retrieval.hpp"

namespace cytorag {

enum class FusionMode { RawScorePool, ReciprocalRankFusion };

std::string_view to_string(FusionMode mode) noexcept;  // "raw" / "rrf"
std::optional<FusionMode> parse_fusion_mode(std::string_view text);

inline constexpr double kRrfConstant = 60.0;

struct Contribution {
  EncoderId encoder;
  double score = 0.0;
  std::size_t rank = 0;

  bool operator==(const Contribution&) const = default;
};

struct FusedNeighbor {
  std::string case_id;
  double fused_score = 0.0;
  std::vector<Contribution> contributing;  // ordered by encoder id

  bool operator==(const FusedNeighbor&) const = default;
};

/// Pools per-encoder lists, one entry per case_id. RawScorePool keeps the
/// maximum cosine; ReciprocalRankFusion sums 1/(60 + rank). Output holds the
/// best k by fused score, ties broken by ascending case_id.
std::vector<FusedNeighbor> fuse(const std::map<EncoderId, std::vector<Neighbor>>& lists,
                                std::size_t k, FusionMode mode);

/// Runs top_k per encoder with `pool_k` (0 means k), then fuses. Throws
/// EmptyQuery, UnknownEncoder, and anything top_k throws.
std::vector<FusedNeighbor> ensemble_top_k(const std::map<EncoderId, Vector>& queries,
                                          std::size_t k, FusionMode mode,
                                          const ExclusionFilter& filter,
                                          const StoreSnapshot& snapshot, std::size_t pool_k = 0,
                                          Execution exec = Execution::Parallel);

}  // namespace cytorag
