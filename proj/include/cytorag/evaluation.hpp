#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cytorag/ensemble.hpp"
#include "cytorag/retrieval.hpp"
#include "cytorag/store.hpp"

namespace cytorag {

/// Malignancy is not one of the two headline tasks; it is reported as the
/// malignancy-level agreement section of a report.
enum class PredictionTask { SurgicalDiagnosis, BethesdaCategory, Malignancy };

std::string_view to_string(PredictionTask task) noexcept;
std::optional<PredictionTask> parse_task(std::string_view text);

/// Ground-truth label of a case for a task (surgical diagnosis normalized).
std::string task_label(const CaseRecord& record, PredictionTask task);

/// True when the case can serve as evaluation ground truth: known
/// malignancy and a nonempty surgical diagnosis.
bool has_ground_truth(const CaseRecord& record);

/// A single encoder or an ensemble over every encoder a query case has.
struct Model {
  enum class Kind { Encoder, Ensemble };

  Kind kind = Kind::Encoder;
  EncoderId encoder;
  FusionMode fusion = FusionMode::RawScorePool;

  static Model for_encoder(EncoderId id) { return {Kind::Encoder, std::move(id), {}}; }
  static Model ensemble(FusionMode mode) { return {Kind::Ensemble, {}, mode}; }

  /// "uni", "ensemble_raw", "ensemble_rrf".
  std::string name() const;
  /// Accepts encoder names, "ensemble" (raw), "ensemble_raw", "ensemble_rrf".
  static Model parse(std::string_view text);

  bool operator==(const Model&) const = default;
};

struct ScoredNeighbor {
  std::string case_id;
  double score = 0.0;
  std::size_t rank = 0;
};

/// Neighbors of a stored case under a model. `pool_k` only affects
/// ensembles (0 means k). Throws MissingEmbedding, NoEligibleNeighbors.
std::vector<ScoredNeighbor> retrieve_for_case(const CaseRecord& query, const Model& model,
                                              std::size_t k, const StoreSnapshot& snapshot,
                                              const ExclusionFilter& filter,
                                              std::size_t pool_k = 0,
                                              Execution exec = Execution::Parallel);

struct LabeledNeighbor {
  std::string label;
  double score = 0.0;
  std::size_t rank = 0;
};

struct RankedLabel {
  std::string label;
  double support = 0.0;  // max similarity among neighbors carrying the label
  std::size_t first_rank = 0;

  bool operator==(const RankedLabel&) const = default;
};

using LabelRanking = std::vector<RankedLabel>;

/// Collapses neighbors to distinct labels ordered by support descending,
/// then first rank ascending.
LabelRanking rank_labels(std::span<const LabeledNeighbor> neighbors);

LabelRanking predict_labels(const CaseRecord& query, const Model& model, std::size_t k,
                            PredictionTask task, const StoreSnapshot& snapshot,
                            const ExclusionFilter& filter);

/// Leave-one-out accuracy over cases with ground truth, an embedding for the
/// model, and at least one eligible neighbor under `exclusion`. Throws
/// EmptyEvaluationSet.
double topk_accuracy(const StoreSnapshot& snapshot, const Model& model, PredictionTask task,
                     std::size_t k, ExclusionMode exclusion,
                     Execution exec = Execution::Parallel);

struct VoteInput {
  double similarity = 0.0;
  bool malignant = false;
};

/// sum(w_i * malignant_i) / sum(w_i) with w_i = max(similarity_i, 0); the
/// unweighted malignant fraction when every weight is 0.
double weighted_malignant_vote(std::span<const VoteInput> votes);

/// Throws MissingEmbedding, NoEligibleNeighbors, InvalidMetadata (a
/// neighbor with unknown malignancy).
double malignancy_score(const CaseRecord& query, const Model& model, std::size_t k,
                        const StoreSnapshot& snapshot, const ExclusionFilter& filter);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the (0, 0) origin

  bool operator==(const RocPoint&) const = default;
};

struct RocResult {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// Threshold sweep over distinct scores, AUC by the trapezoidal rule.
/// Labels are 1 (positive) / 0. Throws InvalidArgument (length mismatch or
/// fewer than 2 items) and DegenerateLabels.
RocResult roc_and_auc(std::span<const double> scores, std::span<const int> labels);

double trapezoid_auc(std::span<const RocPoint> points);

struct EvalConfig {
  std::vector<std::size_t> ks{1, 3, 5};
  ExclusionMode exclusion = ExclusionMode::SameCase;
  std::vector<FusionMode> fusion_modes{FusionMode::RawScorePool,
                                       FusionMode::ReciprocalRankFusion};
  /// Per-encoder candidate pool for ensembles; 0 means max(ks) so that the
  /// Top-k prediction sets nest.
  std::size_t pool_k = 0;
  /// Recorded for provenance; evaluation itself is deterministic.
  std::uint64_t seed = 0;
};

struct ModelResult {
  std::string model;
  std::size_t evaluated_cases = 0;
  std::map<PredictionTask, std::map<std::size_t, double>> accuracy;
  /// Absent when the evaluated cases hold a single malignancy class.
  std::map<std::size_t, std::optional<RocResult>> roc;
};

struct EvalReport {
  EvalConfig config;
  std::uint64_t store_version = 0;
  std::size_t pool_k = 0;
  std::vector<ModelResult> models;  // encoders in registry order, then ensembles
  std::string content_hash;

  const ModelResult* find(std::string_view model) const;
};

/// Every registered encoder plus one ensemble per fusion mode. Throws
/// EmptyEvaluationSet when no model has an evaluable case.
EvalReport evaluate_all(const StoreSnapshot& snapshot, const EvalConfig& config,
                        Execution exec = Execution::Parallel);

/// Throws InvalidArgument naming the first broken report invariant
/// (Top-k monotonicity, metric ranges, ROC shape).
void check_report_invariants(const EvalReport& report);

}  // namespace cytorag
