#include "cytorag/types.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "cytorag/errors.hpp"

namespace cytorag {

namespace {

std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view text) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

constexpr std::array<std::string_view, 6> kBethesdaNames = {"I", "II", "III", "IV", "V", "VI"};

}  // namespace

EncoderId::EncoderId(std::string_view name) : name_(lowercase(trim(name))) {
  if (name_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "encoder name must be nonempty");
  }
}

std::string_view to_string(Bethesda b) noexcept {
  return kBethesdaNames[static_cast<std::size_t>(b) - 1];
}

std::optional<Bethesda> parse_bethesda(std::string_view text) {
  std::string upper(trim(text));
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (std::size_t i = 0; i < kBethesdaNames.size(); ++i) {
    if (upper == kBethesdaNames[i]) return static_cast<Bethesda>(i + 1);
  }
  return std::nullopt;
}

std::string_view to_string(Malignancy m) noexcept {
  switch (m) {
    case Malignancy::Benign: return "benign";
    case Malignancy::Malignant: return "malignant";
    case Malignancy::Unknown: return "unknown";
  }
  return "unknown";
}

std::optional<Malignancy> parse_malignancy(std::string_view text) {
  const std::string lower = lowercase(trim(text));
  if (lower == "benign") return Malignancy::Benign;
  if (lower == "malignant") return Malignancy::Malignant;
  if (lower == "unknown") return Malignancy::Unknown;
  return std::nullopt;
}

std::string normalize_label(std::string_view label) { return lowercase(trim(label)); }

}  // namespace cytorag
