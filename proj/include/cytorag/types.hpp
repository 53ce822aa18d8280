#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cytorag {

/// Name of an embedding namespace ("uni", "gigapath", ...). Always stored
/// lowercase, so lookups are case-insensitive.
class EncoderId {
 public:
  EncoderId() = default;
  explicit EncoderId(std::string_view name);

  const std::string& str() const noexcept { return name_; }
  bool empty() const noexcept { return name_.empty(); }

  auto operator<=>(const EncoderId&) const = default;
  bool operator==(const EncoderId&) const = default;

 private:
  std::string name_;
};

enum class Bethesda : std::uint8_t { I = 1, II, III, IV, V, VI };

std::string_view to_string(Bethesda b) noexcept;
std::optional<Bethesda> parse_bethesda(std::string_view text);

enum class Malignancy : std::uint8_t { Benign = 0, Malignant = 1, Unknown = 2 };

std::string_view to_string(Malignancy m) noexcept;
std::optional<Malignancy> parse_malignancy(std::string_view text);

struct CaseMetadata {
  std::string cytology_diagnosis;
  std::string surgical_diagnosis;
  Bethesda bethesda = Bethesda::III;
  Malignancy malignancy = Malignancy::Unknown;
  std::string interpretation;
  std::string stain;
  std::uint32_t magnification = 40;

  bool operator==(const CaseMetadata&) const = default;
};

using Vector = std::vector<float>;

struct Embedding {
  EncoderId encoder;
  Vector vector;

  bool operator==(const Embedding&) const = default;
};

/// One cytology ROI. At most one vector per encoder.
struct CaseRecord {
  std::string case_id;
  std::string patient_id;
  std::string slide_id;
  std::string roi_id;
  std::map<EncoderId, Vector> embeddings;
  CaseMetadata metadata;

  bool operator==(const CaseRecord&) const = default;
};

/// Lowercased, whitespace-trimmed label used for exact-match ground truth.
std::string normalize_label(std::string_view label);

}  // namespace cytorag
