#include "cytorag/json_io.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "cytorag/errors.hpp"

namespace cytorag {

namespace {

template <class T>
std::string shortest(T value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (std::isnan(value)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

const Json& field(const Json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) {
    throw Error(ErrorCode::InvalidMetadata, std::string("missing field '") + name + "'");
  }
  return *it;
}

std::string string_field(const Json& j, const char* name, bool required) {
  const auto it = j.find(name);
  if (it == j.end() || it->is_null()) {
    if (required) {
      throw Error(ErrorCode::InvalidMetadata, std::string("missing field '") + name + "'");
    }
    return {};
  }
  if (!it->is_string()) {
    throw Error(ErrorCode::InvalidMetadata, std::string("field '") + name + "' must be a string");
  }
  return it->get<std::string>();
}

}  // namespace

std::string format_float(float value) { return shortest(value); }
std::string format_double(double value) { return shortest(value); }

Json metadata_to_json(const CaseRecord& r) {
  const auto& m = r.metadata;
  return Json{{"case_id", r.case_id},
              {"patient_id", r.patient_id},
              {"slide_id", r.slide_id},
              {"roi_id", r.roi_id},
              {"cytology_diagnosis", m.cytology_diagnosis},
              {"surgical_diagnosis", m.surgical_diagnosis},
              {"bethesda", std::string(to_string(m.bethesda))},
              {"malignancy", std::string(to_string(m.malignancy))},
              {"interpretation", m.interpretation},
              {"stain", m.stain},
              {"magnification", m.magnification}};
}

CaseRecord metadata_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidMetadata, "case must be a JSON object");
  CaseRecord r;
  r.case_id = string_field(j, "case_id", true);
  r.patient_id = string_field(j, "patient_id", true);
  r.slide_id = string_field(j, "slide_id", true);
  r.roi_id = string_field(j, "roi_id", true);
  auto& m = r.metadata;
  m.cytology_diagnosis = string_field(j, "cytology_diagnosis", false);
  m.surgical_diagnosis = string_field(j, "surgical_diagnosis", false);
  m.interpretation = string_field(j, "interpretation", false);
  m.stain = string_field(j, "stain", false);

  const auto bethesda = parse_bethesda(string_field(j, "bethesda", true));
  if (!bethesda) throw Error(ErrorCode::InvalidMetadata, "bethesda must be one of I..VI");
  m.bethesda = *bethesda;
  const auto malignancy = parse_malignancy(string_field(j, "malignancy", true));
  if (!malignancy) {
    throw Error(ErrorCode::InvalidMetadata, "malignancy must be benign, malignant or unknown");
  }
  m.malignancy = *malignancy;

  const Json& mag = field(j, "magnification");
  if (!mag.is_number_integer() || mag.get<std::int64_t>() <= 0 ||
      mag.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::InvalidMetadata, "magnification must be a positive integer");
  }
  m.magnification = mag.get<std::uint32_t>();
  return r;
}

EmbeddingLine embedding_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidMetadata, "embedding must be a JSON object");
  EmbeddingLine line;
  line.case_id = string_field(j, "case_id", true);
  line.embedding.encoder = EncoderId(string_field(j, "encoder", true));
  const Json& dim = field(j, "dim");
  const Json& vec = field(j, "vector");
  if (!dim.is_number_integer() || dim.get<std::int64_t>() < 1) {
    throw Error(ErrorCode::InvalidDimension, "dim must be a positive integer");
  }
  if (!vec.is_array()) throw Error(ErrorCode::InvalidMetadata, "vector must be an array");
  if (vec.size() != dim.get<std::size_t>()) {
    throw Error(ErrorCode::DimensionMismatch,
                "dim " + std::to_string(dim.get<std::size_t>()) + " != vector length " +
                    std::to_string(vec.size()));
  }
  line.embedding.vector.reserve(vec.size());
  for (const auto& x : vec) {
    if (!x.is_number()) throw Error(ErrorCode::InvalidMetadata, "vector components must be numbers");
    line.embedding.vector.push_back(static_cast<float>(x.get<double>()));
  }
  return line;
}

std::string embedding_jsonl_line(std::string_view case_id, const EncoderId& encoder,
                                 const Vector& vector) {
  std::string out;
  out.reserve(32 + vector.size() * 12);
  out += "{\"case_id\":";
  out += Json(std::string(case_id)).dump();
  out += ",\"encoder\":";
  out += Json(encoder.str()).dump();
  out += ",\"dim\":";
  out += std::to_string(vector.size());
  out += ",\"vector\":[";
  for (std::size_t i = 0; i < vector.size(); ++i) {
    if (i) out += ',';
    out += format_float(vector[i]);
  }
  out += "]}";
  return out;
}

Json case_to_json(const CaseRecord& record) {
  Json j = metadata_to_json(record);
  Json emb = Json::object();
  for (const auto& [encoder, vector] : record.embeddings) emb[encoder.str()] = vector;
  j["embeddings"] = std::move(emb);
  return j;
}

Json to_json(const Neighbor& n) {
  return Json{{"rank", n.rank}, {"case_id", n.case_id}, {"encoder", n.encoder.str()}, {"score", n.score}};
}

Json to_json(const FusedNeighbor& n) {
  Json contributing = Json::array();
  for (const auto& c : n.contributing) {
    contributing.push_back(Json{{"encoder", c.encoder.str()}, {"score", c.score}, {"rank", c.rank}});
  }
  return Json{{"case_id", n.case_id},
              {"fused_score", n.fused_score},
              {"contributing", std::move(contributing)}};
}

Json to_json(const PromptBundle& b) {
  return Json{{"text", b.text},
              {"template_hash", b.template_hash},
              {"example_count", b.example_count},
              {"query_case_id", b.query_case_id}};
}

PromptBundle bundle_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidMetadata, "bundle must be a JSON object");
  PromptBundle b;
  b.text = string_field(j, "text", true);
  b.template_hash = string_field(j, "template_hash", false);
  b.query_case_id = string_field(j, "query_case_id", false);
  const auto it = j.find("example_count");
  if (it != j.end()) {
    if (!it->is_number_unsigned()) {
      throw Error(ErrorCode::InvalidMetadata, "example_count must be a non-negative integer");
    }
    b.example_count = it->get<std::size_t>();
  }
  return b;
}

}  // namespace cytorag
