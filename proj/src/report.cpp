#include "cytorag/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "cytorag/errors.hpp"
#include "cytorag/hashing.hpp"

namespace cytorag {

namespace {

constexpr PredictionTask kReportTasks[] = {PredictionTask::SurgicalDiagnosis,
                                           PredictionTask::BethesdaCategory,
                                           PredictionTask::Malignancy};

Json roc_to_json(const std::optional<RocResult>& roc) {
  if (!roc) return nullptr;
  Json points = Json::array();
  for (const auto& p : roc->points) {
    points.push_back(Json::array(
        {p.fpr, p.tpr, std::isinf(p.threshold) ? Json(nullptr) : Json(p.threshold)}));
  }
  return Json{{"auc", roc->auc}, {"points", std::move(points)}};
}

std::optional<RocResult> roc_from_json(const Json& j) {
  if (j.is_null()) return std::nullopt;
  RocResult roc;
  roc.auc = j.at("auc").get<double>();
  for (const auto& p : j.at("points")) {
    roc.points.push_back({p.at(0).get<double>(), p.at(1).get<double>(),
                          p.at(2).is_null() ? std::numeric_limits<double>::infinity()
                                            : p.at(2).get<double>()});
  }
  return roc;
}

Json report_body(const EvalReport& r) {
  Json fusion = Json::array();
  for (const auto m : r.config.fusion_modes) fusion.push_back(std::string(to_string(m)));
  Json config{{"ks", r.config.ks},
              {"exclusion", std::string(to_string(r.config.exclusion))},
              {"fusion_modes", std::move(fusion)},
              {"pool_k", r.pool_k},
              {"seed", r.config.seed}};

  Json models = Json::array();
  for (const auto& m : r.models) {
    Json accuracy = Json::object();
    for (const auto& [task, by_k] : m.accuracy) {
      Json row = Json::object();
      for (const auto& [k, value] : by_k) row[std::to_string(k)] = value;
      accuracy[std::string(to_string(task))] = std::move(row);
    }
    Json roc = Json::object();
    for (const auto& [k, value] : m.roc) roc[std::to_string(k)] = roc_to_json(value);
    models.push_back(Json{{"model", m.model},
                          {"evaluated_cases", m.evaluated_cases},
                          {"accuracy", std::move(accuracy)},
                          {"roc", std::move(roc)}});
  }
  return Json{{"schema", "cytorag.eval_report"},
              {"schema_version", kReportSchemaVersion},
              {"config", std::move(config)},
              {"store_version", r.store_version},
              {"models", std::move(models)}};
}

std::string format_fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

const std::map<std::size_t, double>* accuracy_row(const ModelResult& m, PredictionTask task) {
  const auto it = m.accuracy.find(task);
  return it == m.accuracy.end() ? nullptr : &it->second;
}

}  // namespace

std::string report_content_hash(const EvalReport& report) {
  return sha256_hex(report_body(report).dump());
}

Json report_to_json(const EvalReport& report) {
  Json j = report_body(report);
  j["content_hash"] = report.content_hash.empty() ? report_content_hash(report) : report.content_hash;
  return j;
}

EvalReport report_from_json(const Json& j) {
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
      throw Error(ErrorCode::VersionError, "unsupported report schema version");
    }
    EvalReport r;
    const Json& c = j.at("config");
    r.config.ks = c.at("ks").get<std::vector<std::size_t>>();
    const auto exclusion = parse_exclusion_mode(c.at("exclusion").get<std::string>());
    if (!exclusion) throw Error(ErrorCode::FormatError, "bad exclusion mode in report");
    r.config.exclusion = *exclusion;
    r.config.fusion_modes.clear();
    for (const auto& f : c.at("fusion_modes")) {
      const auto mode = parse_fusion_mode(f.get<std::string>());
      if (!mode) throw Error(ErrorCode::FormatError, "bad fusion mode in report");
      r.config.fusion_modes.push_back(*mode);
    }
    r.pool_k = c.at("pool_k").get<std::size_t>();
    r.config.pool_k = r.pool_k;
    r.config.seed = c.at("seed").get<std::uint64_t>();
    r.store_version = j.at("store_version").get<std::uint64_t>();
    for (const auto& m : j.at("models")) {
      ModelResult mr;
      mr.model = m.at("model").get<std::string>();
      mr.evaluated_cases = m.at("evaluated_cases").get<std::size_t>();
      for (const auto& [task_name, row] : m.at("accuracy").items()) {
        const auto task = parse_task(task_name);
        if (!task) throw Error(ErrorCode::FormatError, "bad task '" + task_name + "' in report");
        for (const auto& [k, value] : row.items()) {
          mr.accuracy[*task][std::stoul(k)] = value.get<double>();
        }
      }
      for (const auto& [k, value] : m.at("roc").items()) mr.roc[std::stoul(k)] = roc_from_json(value);
      r.models.push_back(std::move(mr));
    }
    r.content_hash = j.value("content_hash", std::string());
    return r;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("malformed report: ") + e.what());
  }
}

std::string task_title(PredictionTask task) {
  switch (task) {
    case PredictionTask::SurgicalDiagnosis: return "Top-k accuracy: surgical diagnosis";
    case PredictionTask::BethesdaCategory: return "Top-k accuracy: Bethesda category";
    case PredictionTask::Malignancy: return "Top-k accuracy: malignancy agreement";
  }
  return {};
}

std::string render_accuracy_csv(const EvalReport& report, PredictionTask task) {
  std::string out = "metric";
  for (const auto& m : report.models) out += "," + m.model;
  out += "\n";
  for (const auto k : report.config.ks) {
    out += "Top-" + std::to_string(k);
    for (const auto& m : report.models) {
      out += ",";
      const auto* row = accuracy_row(m, task);
      if (row && row->contains(k)) {
        out += format_double(row->at(k));
      } else {
        out += "na";
      }
    }
    out += "\n";
  }
  return out;
}

std::string render_accuracy_text(const EvalReport& report, PredictionTask task) {
  std::size_t width = 5;
  for (const auto& m : report.models) width = std::max(width, m.model.size());
  std::ostringstream out;
  out << task_title(task) << "\n";
  out << "model" << std::string(width - 5, ' ');
  for (const auto k : report.config.ks) {
    const std::string h = "Top-" + std::to_string(k);
    out << "  " << std::string(h.size() < 5 ? 5 - h.size() : 0, ' ') << h;
  }
  out << "\n";
  for (const auto& m : report.models) {
    out << m.model << std::string(width - m.model.size(), ' ');
    const auto* row = accuracy_row(m, task);
    for (const auto k : report.config.ks) {
      const std::string h = "Top-" + std::to_string(k);
      const std::size_t cell = std::max<std::size_t>(5, h.size());
      const std::string v = row && row->contains(k) ? format_fixed2(row->at(k)) : "na";
      out << "  " << std::string(cell > v.size() ? cell - v.size() : 0, ' ') << v;
    }
    out << "\n";
  }
  return out.str();
}

std::string render_auc_csv(const EvalReport& report) {
  std::string out = "model,k,auc\n";
  for (const auto& m : report.models) {
    for (const auto& [k, roc] : m.roc) {
      out += m.model + "," + std::to_string(k) + "," + (roc ? format_double(roc->auc) : "na") + "\n";
    }
  }
  return out;
}

std::string render_roc_csv(const RocResult& roc) {
  std::string out = "fpr,tpr,threshold\n";
  for (const auto& p : roc.points) {
    out += format_double(p.fpr) + "," + format_double(p.tpr) + "," + format_double(p.threshold) + "\n";
  }
  return out;
}

std::vector<RocPoint> parse_roc_csv(const std::string& csv) {
  std::vector<RocPoint> points;
  std::istringstream in(csv);
  std::string line;
  bool header = true;
  const auto parse = [](std::string_view field) {
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
      throw Error(ErrorCode::FormatError, "bad ROC field '" + std::string(field) + "'");
    }
    return v;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      if (line != "fpr,tpr,threshold") throw Error(ErrorCode::FormatError, "bad ROC CSV header");
      header = false;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw Error(ErrorCode::FormatError, "bad ROC CSV row '" + line + "'");
    }
    const std::string_view v(line);
    points.push_back({parse(v.substr(0, c1)), parse(v.substr(c1 + 1, c2 - c1 - 1)),
                      parse(v.substr(c2 + 1))});
  }
  return points;
}

}  // namespace cytorag
