#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cytorag/types.hpp"

namespace cytorag {

struct RetrievedExample {
  std::size_t rank = 0;
  double similarity = 0.0;
  std::string cytology_diagnosis;
  Bethesda bethesda = Bethesda::III;
  std::string interpretation;
};

/// Textual description of the query ROI. Labels of the query case are
/// deliberately absent.
struct QueryInfo {
  std::string case_id;
  std::string stain;
  std::uint32_t magnification = 40;
};

QueryInfo query_info_from(const CaseRecord& record);

/// Four text sections with `{name}` placeholders; `{{` and `}}` are literal
/// braces. Allowed placeholders:
///   preamble, instruction: {example_count}
///   example:  {rank} {similarity} {diagnosis} {bethesda} {interpretation}
///   query:    {case_id} {stain} {magnification} {example_count}
class PromptTemplate {
 public:
  /// Throws TemplateError when a section uses an unknown placeholder or an
  /// unbalanced brace.
  PromptTemplate(std::string preamble, std::string example_block, std::string query_section,
                 std::string instruction);

  static const PromptTemplate& builtin();

  /// Parses the `[preamble]` / `[example]` / `[query]` / `[instruction]`
  /// sectioned text format.
  static PromptTemplate parse(std::string_view text);

  /// `<dir>/<id>.tmpl`; id "default" falls back to the builtin template when
  /// no such file exists.
  static PromptTemplate load(const std::filesystem::path& dir, std::string_view id);

  const std::string& preamble() const noexcept { return preamble_; }
  const std::string& example_block() const noexcept { return example_; }
  const std::string& query_section() const noexcept { return query_; }
  const std::string& instruction() const noexcept { return instruction_; }

  /// SHA-256 over the section contents; identifies the template version.
  const std::string& hash() const noexcept { return hash_; }

  std::string serialize() const;

 private:
  std::string preamble_;
  std::string example_;
  std::string query_;
  std::string instruction_;
  std::string hash_;
};

struct PromptBundle {
  std::string text;
  std::string template_hash;
  std::size_t example_count = 0;
  std::string query_case_id;

  bool operator==(const PromptBundle&) const = default;
};

/// Pure rendering: preamble, one block per example in the order given,
/// query section, instruction; sections separated by a blank line.
/// Similarity is printed with 4 decimals. Throws EmptyContext.
PromptBundle assemble_prompt(const QueryInfo& query, std::span<const RetrievedExample> examples,
                             const PromptTemplate& tmpl);

}  // namespace cytorag
