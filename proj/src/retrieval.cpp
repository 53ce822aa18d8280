#include "cytorag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cytorag/errors.hpp"

namespace cytorag {

namespace {

template <class T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch, "cosine_similarity: lengths " +
                                                   std::to_string(a.size()) + " and " +
                                                   std::to_string(b.size()) + " differ");
  }
  const double na = kernels::norm(a);
  const double nb = kernels::norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw Error(ErrorCode::ZeroNormVector, "cosine_similarity: zero-norm vector");
  }
  return kernels::clamp_unit(kernels::dot(a, b) / (na * nb));
}

}  // namespace

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  return cosine_impl(a, b);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  return cosine_impl(a, b);
}

std::string_view to_string(ExclusionMode mode) noexcept {
  switch (mode) {
    case ExclusionMode::None: return "none";
    case ExclusionMode::SameCase: return "same_case";
    case ExclusionMode::SamePatient: return "same_patient";
  }
  return "none";
}

std::optional<ExclusionMode> parse_exclusion_mode(std::string_view text) {
  if (text == "none") return ExclusionMode::None;
  if (text == "same_case") return ExclusionMode::SameCase;
  if (text == "same_patient") return ExclusionMode::SamePatient;
  return std::nullopt;
}

std::vector<char> eligibility_mask(const ExclusionFilter& filter, const StoreSnapshot& snapshot) {
  const auto& cases = snapshot.cases();
  std::vector<char> eligible(cases.size(), 1);
  for (const auto& id : filter.excluded_case_ids) {
    if (const auto idx = snapshot.index_of(id)) eligible[*idx] = 0;
  }
  if (filter.mode == ExclusionMode::None) return eligible;

  const auto anchor = snapshot.index_of(filter.anchor_case_id);
  if (!anchor) return eligible;
  eligible[*anchor] = 0;
  if (filter.mode == ExclusionMode::SamePatient) {
    const std::string& patient = cases[*anchor].patient_id;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      if (cases[i].patient_id == patient) eligible[i] = 0;
    }
  }
  return eligible;
}

std::vector<Neighbor> top_k(const Embedding& query, std::size_t k, const ExclusionFilter& filter,
                            const StoreSnapshot& snapshot, Execution exec) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  const EncoderMatrix* matrix = snapshot.matrix(query.encoder);
  if (!matrix) {
    throw Error(ErrorCode::UnknownEncoder, "encoder '" + query.encoder.str() + "' is not registered");
  }
  if (query.vector.size() != matrix->dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "query has " + std::to_string(query.vector.size()) + " components, encoder '" +
                    query.encoder.str() + "' expects " + std::to_string(matrix->dim));
  }
  const std::span<const float> q(query.vector);
  const double query_norm = kernels::norm(q);
  if (!(query_norm > 0.0) || !std::isfinite(query_norm)) {
    throw Error(ErrorCode::ZeroNormVector, "query vector has zero or non-finite norm");
  }

  std::vector<double> scores(matrix->rows());
  kernels::score_rows(exec, *matrix, q, query_norm, scores);

  const auto eligible = eligibility_mask(filter, snapshot);
  const auto& cases = snapshot.cases();
  std::vector<std::uint32_t> candidates;
  candidates.reserve(matrix->rows());
  for (std::uint32_t r = 0; r < matrix->rows(); ++r) {
    if (eligible[matrix->case_index[r]]) candidates.push_back(r);
  }

  // Rows are in case_id order, so a lower row index means a smaller case_id.
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  const std::size_t m = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(m),
                    candidates.end(), better);

  std::vector<Neighbor> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = candidates[i];
    out.push_back({cases[matrix->case_index[r]].case_id, query.encoder, scores[r], i + 1});
  }
  return out;
}

}  // namespace cytorag
