#pragma once

#include <string>

#include "cytorag/evaluation.hpp"
#include "cytorag/json_io.hpp"

namespace cytorag {

inline constexpr int kReportSchemaVersion = 1;

/// Versioned report JSON. The content hash covers everything except itself.
Json report_to_json(const EvalReport& report);
EvalReport report_from_json(const Json& j);

/// SHA-256 of the canonical JSON dump without the content_hash field.
std::string report_content_hash(const EvalReport& report);

/// Accuracy table layout: a header row of model
/// names, then one row per Top-k. Values use shortest round-trip decimals.
std::string render_accuracy_csv(const EvalReport& report, PredictionTask task);

/// Human-readable table, one row per model with values to 2 decimals.
std::string render_accuracy_text(const EvalReport& report, PredictionTask task);

/// model,k,auc rows; "na" when the ROC is undefined.
std::string render_auc_csv(const EvalReport& report);

/// fpr,tpr,threshold rows for one model and k.
std::string render_roc_csv(const RocResult& roc);

/// Parses render_roc_csv output back into points.
std::vector<RocPoint> parse_roc_csv(const std::string& csv);

std::string task_title(PredictionTask task);

}  // namespace cytorag
