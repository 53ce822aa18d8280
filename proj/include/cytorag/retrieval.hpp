#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cytorag/kernels.hpp"
#include "cytorag/store.hpp"
#include "cytorag/types.hpp"

namespace cytorag {

/// Normalized dot product clamped to [-1, 1]. Components are accumulated in
/// double. Throws DimensionMismatch or ZeroNormVector.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

enum class ExclusionMode { None, SameCase, SamePatient };

std::string_view to_string(ExclusionMode mode) noexcept;
std::optional<ExclusionMode> parse_exclusion_mode(std::string_view text);

/// Leakage control for leave-one-out queries. `anchor_case_id` names the
/// query case; SameCase drops it, SamePatient also drops every case sharing
/// its patient_id. Explicit ids are always dropped.
struct ExclusionFilter {
  ExclusionMode mode = ExclusionMode::None;
  std::string anchor_case_id;
  std::set<std::string, std::less<>> excluded_case_ids;

  static ExclusionFilter none() { return {}; }
  static ExclusionFilter for_case(ExclusionMode mode, std::string anchor) {
    return {mode, std::move(anchor), {}};
  }
};

struct Neighbor {
  std::string case_id;
  EncoderId encoder;
  double score = 0.0;
  std::size_t rank = 0;  // 1 = best

  bool operator==(const Neighbor&) const = default;
};

/// Exact scan over one encoder namespace. Returns min(k, eligible) neighbors
/// ordered by score descending, then case_id ascending. Throws
/// InvalidArgument (k == 0), UnknownEncoder, DimensionMismatch,
/// ZeroNormVector.
std::vector<Neighbor> top_k(const Embedding& query, std::size_t k, const ExclusionFilter& filter,
                            const StoreSnapshot& snapshot,
                            Execution exec = Execution::Parallel);

/// Per-snapshot-case eligibility mask for a filter.
std::vector<char> eligibility_mask(const ExclusionFilter& filter, const StoreSnapshot& snapshot);

}  // namespace cytorag
