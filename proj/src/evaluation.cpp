#include "cytorag/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>

#include "cytorag/errors.hpp"
#include "cytorag/report.hpp"

namespace cytorag {

std::string_view to_string(PredictionTask task) noexcept {
  switch (task) {
    case PredictionTask::SurgicalDiagnosis: return "surgical_diagnosis";
    case PredictionTask::BethesdaCategory: return "bethesda";
    case PredictionTask::Malignancy: return "malignancy";
  }
  return "surgical_diagnosis";
}

std::optional<PredictionTask> parse_task(std::string_view text) {
  if (text == "surgical_diagnosis" || text == "diagnosis") return PredictionTask::SurgicalDiagnosis;
  if (text == "bethesda" || text == "tbsrtc") return PredictionTask::BethesdaCategory;
  if (text == "malignancy") return PredictionTask::Malignancy;
  return std::nullopt;
}

std::string task_label(const CaseRecord& record, PredictionTask task) {
  switch (task) {
    case PredictionTask::SurgicalDiagnosis:
      return normalize_label(record.metadata.surgical_diagnosis);
    case PredictionTask::BethesdaCategory: return std::string(to_string(record.metadata.bethesda));
    case PredictionTask::Malignancy: return std::string(to_string(record.metadata.malignancy));
  }
  return {};
}

bool has_ground_truth(const CaseRecord& record) {
  return record.metadata.malignancy != Malignancy::Unknown &&
         !normalize_label(record.metadata.surgical_diagnosis).empty();
}

std::string Model::name() const {
  if (kind == Kind::Encoder) return encoder.str();
  return "ensemble_" + std::string(to_string(fusion));
}

Model Model::parse(std::string_view text) {
  if (text == "ensemble" || text == "ensemble_raw") return ensemble(FusionMode::RawScorePool);
  if (text == "ensemble_rrf") return ensemble(FusionMode::ReciprocalRankFusion);
  return for_encoder(EncoderId(text));
}

std::vector<ScoredNeighbor> retrieve_for_case(const CaseRecord& query, const Model& model,
                                              std::size_t k, const StoreSnapshot& snapshot,
                                              const ExclusionFilter& filter, std::size_t pool_k,
                                              Execution exec) {
  std::vector<ScoredNeighbor> out;
  if (model.kind == Model::Kind::Encoder) {
    const auto it = query.embeddings.find(model.encoder);
    if (it == query.embeddings.end()) {
      throw Error(ErrorCode::MissingEmbedding,
                  "case '" + query.case_id + "' has no '" + model.encoder.str() + "' embedding");
    }
    for (auto& n : top_k(Embedding{model.encoder, it->second}, k, filter, snapshot, exec)) {
      out.push_back({std::move(n.case_id), n.score, n.rank});
    }
  } else {
    std::map<EncoderId, Vector> queries;
    for (const auto& [encoder, vector] : query.embeddings) {
      if (snapshot.registry().contains(encoder)) queries.emplace(encoder, vector);
    }
    if (queries.empty()) {
      throw Error(ErrorCode::MissingEmbedding, "case '" + query.case_id + "' has no embeddings");
    }
    const auto fused = ensemble_top_k(queries, k, model.fusion, filter, snapshot, pool_k, exec);
    for (std::size_t i = 0; i < fused.size(); ++i) {
      out.push_back({fused[i].case_id, fused[i].fused_score, i + 1});
    }
  }
  if (out.empty()) {
    throw Error(ErrorCode::NoEligibleNeighbors,
                "no eligible neighbors for case '" + query.case_id + "'");
  }
  return out;
}

LabelRanking rank_labels(std::span<const LabeledNeighbor> neighbors) {
  LabelRanking ranking;
  for (const auto& n : neighbors) {
    auto it = std::find_if(ranking.begin(), ranking.end(),
                           [&](const RankedLabel& r) { return r.label == n.label; });
    if (it == ranking.end()) {
      ranking.push_back({n.label, n.score, n.rank});
    } else {
      it->support = std::max(it->support, n.score);
      it->first_rank = std::min(it->first_rank, n.rank);
    }
  }
  std::stable_sort(ranking.begin(), ranking.end(), [](const RankedLabel& a, const RankedLabel& b) {
    if (a.support != b.support) return a.support > b.support;
    return a.first_rank < b.first_rank;
  });
  return ranking;
}

namespace {

std::vector<LabeledNeighbor> label_neighbors(std::span<const ScoredNeighbor> neighbors,
                                             PredictionTask task, const StoreSnapshot& snapshot) {
  std::vector<LabeledNeighbor> out;
  out.reserve(neighbors.size());
  for (const auto& n : neighbors) {
    out.push_back({task_label(*snapshot.find(n.case_id), task), n.score, n.rank});
  }
  return out;
}

bool label_in_prefix(const LabelRanking& ranking, const std::string& truth, std::size_t k) {
  const std::size_t m = std::min(k, ranking.size());
  for (std::size_t i = 0; i < m; ++i) {
    if (ranking[i].label == truth) return true;
  }
  return false;
}

std::vector<VoteInput> votes_for(std::span<const ScoredNeighbor> neighbors,
                                 const StoreSnapshot& snapshot) {
  std::vector<VoteInput> votes;
  votes.reserve(neighbors.size());
  for (const auto& n : neighbors) {
    const auto m = snapshot.find(n.case_id)->metadata.malignancy;
    if (m == Malignancy::Unknown) {
      throw Error(ErrorCode::InvalidMetadata,
                  "neighbor '" + n.case_id + "' has unknown malignancy");
    }
    votes.push_back({n.score, m == Malignancy::Malignant});
  }
  return votes;
}

// Cases without ground truth never enter a leave-one-out retrieval pool.
ExclusionFilter evaluation_filter(ExclusionMode mode, const CaseRecord& query,
                                  const std::set<std::string, std::less<>>& query_only) {
  ExclusionFilter f = ExclusionFilter::for_case(mode, query.case_id);
  f.excluded_case_ids = query_only;
  return f;
}

std::set<std::string, std::less<>> query_only_cases(const StoreSnapshot& snapshot) {
  std::set<std::string, std::less<>> out;
  for (const auto& c : snapshot.cases()) {
    if (!has_ground_truth(c)) out.insert(c.case_id);
  }
  return out;
}

bool has_model_embedding(const CaseRecord& c, const Model& model, const StoreSnapshot& snapshot) {
  if (model.kind == Model::Kind::Encoder) return c.embeddings.contains(model.encoder);
  return std::any_of(c.embeddings.begin(), c.embeddings.end(),
                     [&](const auto& e) { return snapshot.registry().contains(e.first); });
}

}  // namespace

LabelRanking predict_labels(const CaseRecord& query, const Model& model, std::size_t k,
                            PredictionTask task, const StoreSnapshot& snapshot,
                            const ExclusionFilter& filter) {
  const auto neighbors = retrieve_for_case(query, model, k, snapshot, filter);
  const auto labeled = label_neighbors(neighbors, task, snapshot);
  return rank_labels(labeled);
}

double topk_accuracy(const StoreSnapshot& snapshot, const Model& model, PredictionTask task,
                     std::size_t k, ExclusionMode exclusion, Execution exec) {
  const auto& cases = snapshot.cases();
  std::vector<std::size_t> queries;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (has_ground_truth(cases[i]) && has_model_embedding(cases[i], model, snapshot)) {
      queries.push_back(i);
    }
  }
  const auto query_only = query_only_cases(snapshot);
  // 1 correct, 0 wrong, -1 not evaluable (no eligible neighbors).
  std::vector<int> outcome(queries.size(), -1);
  const auto evaluate_one = [&](std::size_t q, Execution inner) {
    const CaseRecord& c = cases[queries[q]];
    try {
      const auto neighbors = retrieve_for_case(
          c, model, k, snapshot, evaluation_filter(exclusion, c, query_only), 0, inner);
      const auto ranking = rank_labels(label_neighbors(neighbors, task, snapshot));
      outcome[q] = label_in_prefix(ranking, task_label(c, task), k) ? 1 : 0;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoEligibleNeighbors) throw;
    }
  };
  if (exec == Execution::Parallel) {
    const auto n = static_cast<std::int64_t>(queries.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t q = 0; q < n; ++q) {
      try {
        evaluate_one(static_cast<std::size_t>(q), Execution::Serial);
      } catch (...) {
#pragma omp critical(cytorag_eval_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t q = 0; q < queries.size(); ++q) evaluate_one(q, Execution::Serial);
  }

  std::size_t evaluated = 0, correct = 0;
  for (const int o : outcome) {
    if (o < 0) continue;
    ++evaluated;
    correct += static_cast<std::size_t>(o);
  }
  if (evaluated == 0) {
    throw Error(ErrorCode::EmptyEvaluationSet, "no evaluable cases for model '" + model.name() + "'");
  }
  return static_cast<double>(correct) / static_cast<double>(evaluated);
}

double weighted_malignant_vote(std::span<const VoteInput> votes) {
  if (votes.empty()) throw Error(ErrorCode::NoEligibleNeighbors, "no votes");
  double weighted = 0.0, total = 0.0;
  std::size_t malignant = 0;
  for (const auto& v : votes) {
    const double w = std::max(v.similarity, 0.0);
    total += w;
    if (v.malignant) {
      weighted += w;
      ++malignant;
    }
  }
  if (total > 0.0) return std::clamp(weighted / total, 0.0, 1.0);
  return static_cast<double>(malignant) / static_cast<double>(votes.size());
}

double malignancy_score(const CaseRecord& query, const Model& model, std::size_t k,
                        const StoreSnapshot& snapshot, const ExclusionFilter& filter) {
  const auto neighbors = retrieve_for_case(query, model, k, snapshot, filter);
  const auto votes = votes_for(neighbors, snapshot);
  return weighted_malignant_vote(votes);
}

double trapezoid_auc(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

RocResult roc_and_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::InvalidArgument, "scores and labels differ in length");
  }
  if (scores.size() < 2) throw Error(ErrorCode::InvalidArgument, "ROC needs at least 2 items");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
    }
    if (!std::isfinite(scores[i])) throw Error(ErrorCode::InvalidArgument, "non-finite score");
    positives += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorCode::DegenerateLabels, "ROC needs both positive and negative labels");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult result;
  result.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  const auto p = static_cast<double>(positives);
  const auto n = static_cast<double>(negatives);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      if (labels[order[i]] == 1) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    result.points.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p, threshold});
  }
  result.auc = trapezoid_auc(result.points);
  return result;
}

const ModelResult* EvalReport::find(std::string_view model) const {
  for (const auto& m : models) {
    if (m.model == model) return &m;
  }
  return nullptr;
}

namespace {

constexpr PredictionTask kTasks[] = {PredictionTask::SurgicalDiagnosis,
                                     PredictionTask::BethesdaCategory, PredictionTask::Malignancy};

struct CaseOutcome {
  bool evaluable = false;
  // [task][k index]
  std::vector<std::vector<char>> correct;
  std::vector<double> malignancy;  // [k index]
};

ModelResult evaluate_model(const StoreSnapshot& snapshot, const Model& model,
                           const EvalConfig& config, std::size_t pool_k, Execution exec) {
  const auto& cases = snapshot.cases();
  const std::vector<std::size_t>& ks = config.ks;
  const std::size_t k_max = *std::max_element(ks.begin(), ks.end());

  std::vector<std::size_t> queries;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (has_ground_truth(cases[i]) && has_model_embedding(cases[i], model, snapshot)) {
      queries.push_back(i);
    }
  }

  const auto query_only = query_only_cases(snapshot);
  std::vector<CaseOutcome> outcomes(queries.size());
  const auto evaluate_one = [&](std::size_t q) {
    const CaseRecord& c = cases[queries[q]];
    std::vector<ScoredNeighbor> neighbors;
    try {
      neighbors = retrieve_for_case(c, model, k_max, snapshot,
                                    evaluation_filter(config.exclusion, c, query_only),
                                    pool_k, Execution::Serial);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NoEligibleNeighbors) return;
      throw;
    }
    CaseOutcome& out = outcomes[q];
    out.evaluable = true;
    out.correct.assign(std::size(kTasks), std::vector<char>(ks.size(), 0));
    out.malignancy.assign(ks.size(), 0.0);
    const auto votes = votes_for(neighbors, snapshot);
    for (std::size_t t = 0; t < std::size(kTasks); ++t) {
      const auto labeled = label_neighbors(neighbors, kTasks[t], snapshot);
      const std::string truth = task_label(c, kTasks[t]);
      for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        const std::size_t m = std::min(ks[ki], labeled.size());
        const auto ranking = rank_labels(std::span(labeled).first(m));
        out.correct[t][ki] = label_in_prefix(ranking, truth, ks[ki]) ? 1 : 0;
      }
    }
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      const std::size_t m = std::min(ks[ki], votes.size());
      out.malignancy[ki] = weighted_malignant_vote(std::span(votes).first(m));
    }
  };

  if (exec == Execution::Parallel) {
    const auto n = static_cast<std::int64_t>(queries.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t q = 0; q < n; ++q) {
      try {
        evaluate_one(static_cast<std::size_t>(q));
      } catch (...) {
#pragma omp critical(cytorag_eval_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t q = 0; q < queries.size(); ++q) evaluate_one(q);
  }

  // Deterministic reduction in case order.
  ModelResult result;
  result.model = model.name();
  std::vector<std::size_t> evaluated_idx;
  for (std::size_t q = 0; q < outcomes.size(); ++q) {
    if (outcomes[q].evaluable) evaluated_idx.push_back(q);
  }
  result.evaluated_cases = evaluated_idx.size();
  if (evaluated_idx.empty()) return result;

  for (std::size_t t = 0; t < std::size(kTasks); ++t) {
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      std::size_t correct = 0;
      for (const auto q : evaluated_idx) correct += static_cast<std::size_t>(outcomes[q].correct[t][ki]);
      result.accuracy[kTasks[t]][ks[ki]] =
          static_cast<double>(correct) / static_cast<double>(evaluated_idx.size());
    }
  }
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto q : evaluated_idx) {
      scores.push_back(outcomes[q].malignancy[ki]);
      labels.push_back(cases[queries[q]].metadata.malignancy == Malignancy::Malignant ? 1 : 0);
    }
    try {
      result.roc[ks[ki]] = roc_and_auc(scores, labels);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateLabels && e.code() != ErrorCode::InvalidArgument) throw;
      result.roc[ks[ki]] = std::nullopt;
    }
  }
  return result;
}

}  // namespace

EvalReport evaluate_all(const StoreSnapshot& snapshot, const EvalConfig& config, Execution exec) {
  if (config.ks.empty()) throw Error(ErrorCode::InvalidArgument, "at least one k is required");
  for (const auto k : config.ks) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  }
  EvalReport report;
  report.config = config;
  std::sort(report.config.ks.begin(), report.config.ks.end());
  report.config.ks.erase(std::unique(report.config.ks.begin(), report.config.ks.end()),
                         report.config.ks.end());
  report.store_version = snapshot.version();
  const std::size_t k_max = report.config.ks.back();
  report.pool_k = config.pool_k == 0 ? k_max : config.pool_k;
  if (report.pool_k < k_max) throw Error(ErrorCode::InvalidArgument, "pool_k must be >= max k");

  std::vector<Model> models;
  for (const auto& [encoder, dim] : snapshot.registry().entries()) {
    models.push_back(Model::for_encoder(encoder));
  }
  if (snapshot.registry().size() > 0) {
    for (const auto mode : report.config.fusion_modes) models.push_back(Model::ensemble(mode));
  }

  bool any = false;
  for (const auto& model : models) {
    report.models.push_back(evaluate_model(snapshot, model, report.config, report.pool_k, exec));
    any = any || report.models.back().evaluated_cases > 0;
  }
  if (!any) throw Error(ErrorCode::EmptyEvaluationSet, "no evaluable cases in store");
  report.content_hash = report_content_hash(report);
  return report;
}

void check_report_invariants(const EvalReport& report) {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  for (const auto& m : report.models) {
    for (const auto& [task, by_k] : m.accuracy) {
      double previous = -1.0;
      for (const auto& [k, acc] : by_k) {
        if (!(acc >= 0.0 && acc <= 1.0)) fail(m.model + ": accuracy out of [0,1]");
        if (acc < previous) {
          fail(m.model + "/" + std::string(to_string(task)) + ": Top-k accuracy decreases at k=" +
               std::to_string(k));
        }
        previous = acc;
      }
    }
    for (const auto& [k, roc] : m.roc) {
      if (!roc) continue;
      if (!(roc->auc >= 0.0 && roc->auc <= 1.0)) fail(m.model + ": AUC out of [0,1]");
      const auto& pts = roc->points;
      if (pts.empty() || pts.front().fpr != 0.0 || pts.front().tpr != 0.0 ||
          pts.back().fpr != 1.0 || pts.back().tpr != 1.0) {
        fail(m.model + ": ROC endpoints must be (0,0) and (1,1)");
      }
      for (std::size_t i = 1; i < pts.size(); ++i) {
        if (pts[i].fpr < pts[i - 1].fpr || pts[i].tpr < pts[i - 1].tpr) {
          fail(m.model + ": ROC is not monotone");
        }
      }
    }
  }
}

}  // namespace cytorag
