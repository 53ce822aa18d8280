#include "cytorag/decisions.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>

#include "cytorag/errors.hpp"

namespace cytorag {

namespace {

std::string required_string(const Json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw Error(ErrorCode::InvalidMetadata, std::string("field '") + name + "' must be a nonempty string");
  }
  return it->get<std::string>();
}

std::string optional_string(const Json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) {
    throw Error(ErrorCode::InvalidMetadata, std::string("field '") + name + "' must be a string");
  }
  return it->get<std::string>();
}

}  // namespace

Json to_json(const DecisionRecord& r) {
  return Json{{"decision_id", r.decision_id},
              {"case_id", r.case_id},
              {"reviewer_id", r.reviewer_id},
              {"chosen_diagnosis", r.chosen_diagnosis},
              {"chosen_bethesda", std::string(to_string(r.chosen_bethesda))},
              {"neighbors_shown", r.neighbors_shown},
              {"llm_response_digest", r.llm_response_digest},
              {"timestamp", r.timestamp}};
}

DecisionRecord decision_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidMetadata, "decision must be a JSON object");
  DecisionRecord r;
  r.decision_id = optional_string(j, "decision_id");
  r.case_id = required_string(j, "case_id");
  r.reviewer_id = required_string(j, "reviewer_id");
  r.chosen_diagnosis = required_string(j, "chosen_diagnosis");
  const auto b = parse_bethesda(required_string(j, "chosen_bethesda"));
  if (!b) throw Error(ErrorCode::InvalidMetadata, "chosen_bethesda must be one of I..VI");
  r.chosen_bethesda = *b;
  if (const auto it = j.find("neighbors_shown"); it != j.end()) {
    if (!it->is_array()) throw Error(ErrorCode::InvalidMetadata, "neighbors_shown must be an array");
    for (const auto& id : *it) {
      if (!id.is_string()) throw Error(ErrorCode::InvalidMetadata, "neighbors_shown must hold strings");
      r.neighbors_shown.push_back(id.get<std::string>());
    }
  }
  r.llm_response_digest = optional_string(j, "llm_response_digest");
  r.timestamp = optional_string(j, "timestamp");
  return r;
}

std::string format_rfc3339(std::chrono::system_clock::time_point t) {
  using namespace std::chrono;
  const auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(ms % 1000));
  return buf;
}

DecisionJournal::DecisionJournal(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  if (!in) throw Error(ErrorCode::IoError, "cannot open journal '" + path_.string() + "'");
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      records_.push_back(decision_from_json(Json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::FormatError, path_.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

DecisionRecord DecisionJournal::append(DecisionRecord draft,
                                       std::chrono::system_clock::time_point now) {
  std::lock_guard lock(mutex_);
  auto [it, inserted] = last_by_reviewer_.try_emplace(draft.reviewer_id, now);
  if (!inserted) {
    if (now < it->second) now = it->second;
    it->second = now;
  }
  char id[32];
  std::snprintf(id, sizeof id, "d%06zu", records_.size() + 1);
  draft.decision_id = id;
  draft.timestamp = format_rfc3339(now);

  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to journal '" + path_.string() + "'");
    out << to_json(draft).dump() << '\n';
    if (!out.flush()) throw Error(ErrorCode::IoError, "journal write failed");
  }
  records_.push_back(draft);
  return draft;
}

std::vector<DecisionRecord> DecisionJournal::list(std::optional<std::string_view> case_id) const {
  std::lock_guard lock(mutex_);
  std::vector<DecisionRecord> out;
  for (const auto& r : records_) {
    if (!case_id || r.case_id == *case_id) out.push_back(r);
  }
  return out;
}

std::size_t DecisionJournal::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

}  // namespace cytorag
