#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cytorag/json_io.hpp"
#include "cytorag/types.hpp"

namespace cytorag {

struct DecisionRecord {
  std::string decision_id;
  std::string case_id;
  std::string reviewer_id;
  std::string chosen_diagnosis;
  Bethesda chosen_bethesda = Bethesda::III;
  std::vector<std::string> neighbors_shown;
  std::string llm_response_digest;
  std::string timestamp;  // RFC 3339, UTC, millisecond precision

  bool operator==(const DecisionRecord&) const = default;
};

Json to_json(const DecisionRecord& record);
/// Parses a journal line or a POST body (id/timestamp optional). Throws
/// InvalidMetadata.
DecisionRecord decision_from_json(const Json& j);

std::string format_rfc3339(std::chrono::system_clock::time_point t);

/// Append-only JSONL journal. Each append is flushed before it returns.
/// An empty path keeps the journal in memory.
class DecisionJournal {
 public:
  explicit DecisionJournal(std::filesystem::path path = {});

  /// Assigns decision_id and timestamp. Timestamps never go backwards for a
  /// reviewer, even if the clock does.
  DecisionRecord append(DecisionRecord draft,
                        std::chrono::system_clock::time_point now = std::chrono::system_clock::now());

  std::vector<DecisionRecord> list(std::optional<std::string_view> case_id = std::nullopt) const;
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::vector<DecisionRecord> records_;
  std::map<std::string, std::chrono::system_clock::time_point, std::less<>> last_by_reviewer_;
};

}  // namespace cytorag
