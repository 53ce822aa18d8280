#include "cytorag/prompt.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <map>
#include <sstream>

#include "cytorag/errors.hpp"
#include "cytorag/hashing.hpp"

namespace cytorag {

namespace {

using Values = std::map<std::string, std::string, std::less<>>;

// Walks `text`, calling on_literal / on_placeholder. Throws TemplateError on
// unbalanced braces.
template <class Literal, class Placeholder>
void scan(std::string_view text, Literal&& on_literal, Placeholder&& on_placeholder) {
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '{') {
      if (i + 1 < text.size() && text[i + 1] == '{') {
        on_literal('{');
        i += 2;
        continue;
      }
      const auto close = text.find('}', i + 1);
      if (close == std::string_view::npos) {
        throw Error(ErrorCode::TemplateError, "unclosed '{' in template");
      }
      on_placeholder(text.substr(i + 1, close - i - 1));
      i = close + 1;
    } else if (c == '}') {
      if (i + 1 < text.size() && text[i + 1] == '}') {
        on_literal('}');
        i += 2;
        continue;
      }
      throw Error(ErrorCode::TemplateError, "stray '}' in template");
    } else {
      on_literal(c);
      ++i;
    }
  }
}

void check_placeholders(std::string_view section, std::string_view text,
                        std::initializer_list<std::string_view> allowed) {
  scan(text, [](char) {}, [&](std::string_view name) {
    for (auto a : allowed) {
      if (a == name) return;
    }
    throw Error(ErrorCode::TemplateError,
                "unknown placeholder {" + std::string(name) + "} in [" + std::string(section) + "]");
  });
}

std::string render(std::string_view text, const Values& values) {
  std::string out;
  out.reserve(text.size() + 64);
  scan(text, [&](char c) { out.push_back(c); }, [&](std::string_view name) {
    const auto it = values.find(name);
    if (it == values.end()) {
      throw Error(ErrorCode::TemplateError, "unresolvable placeholder {" + std::string(name) + "}");
    }
    out += it->second;
  });
  return out;
}

std::string trim_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && (s[start] == '\n' || s[start] == '\r')) ++start;
  return s.substr(start);
}

std::string format_similarity(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", value);
  return buf;
}

constexpr std::string_view kBuiltinTemplate = R"([preamble]
You are assisting a cytopathologist with a thyroid fine-needle aspiration case.
The {example_count} reference cases below were retrieved from an image-embedding database by cosine similarity to the query region of interest. Each reference lists its diagnosis, Bethesda category and the pathologist's interpretation.

[example]
Reference case {rank} (similarity {similarity})
Diagnosis: {diagnosis}
Bethesda category: {bethesda}
Interpretation: {interpretation}

[query]
Query case {case_id}: thyroid FNA smear, {stain} stain, region of interest imaged at {magnification}x.

[instruction]
Using the reference cases as evidence, state the most likely diagnosis and the Bethesda category (I-VI) for the query case, and name the reference cases that support your answer.
)";

}  // namespace

QueryInfo query_info_from(const CaseRecord& record) {
  return {record.case_id, record.metadata.stain, record.metadata.magnification};
}

PromptTemplate::PromptTemplate(std::string preamble, std::string example_block,
                               std::string query_section, std::string instruction)
    : preamble_(trim_newlines(std::move(preamble))),
      example_(trim_newlines(std::move(example_block))),
      query_(trim_newlines(std::move(query_section))),
      instruction_(trim_newlines(std::move(instruction))) {
  check_placeholders("preamble", preamble_, {"example_count"});
  check_placeholders("example", example_,
                     {"rank", "similarity", "diagnosis", "bethesda", "interpretation"});
  check_placeholders("query", query_, {"case_id", "stain", "magnification", "example_count"});
  check_placeholders("instruction", instruction_, {"example_count"});
  std::string canonical;
  for (const std::string* s : {&preamble_, &example_, &query_, &instruction_}) {
    canonical += *s;
    canonical.push_back('\0');
  }
  hash_ = sha256_hex(canonical);
}

const PromptTemplate& PromptTemplate::builtin() {
  static const PromptTemplate tmpl = parse(kBuiltinTemplate);
  return tmpl;
}

PromptTemplate PromptTemplate::parse(std::string_view text) {
  std::map<std::string, std::string, std::less<>> sections;
  std::string* current = nullptr;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
      const std::string name = line.substr(1, line.size() - 2);
      if (name != "preamble" && name != "example" && name != "query" && name != "instruction") {
        throw Error(ErrorCode::TemplateError, "unknown template section [" + name + "]");
      }
      if (sections.contains(name)) {
        throw Error(ErrorCode::TemplateError, "duplicate template section [" + name + "]");
      }
      current = &sections[name];
      continue;
    }
    if (!current) {
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      throw Error(ErrorCode::TemplateError, "text before the first template section");
    }
    *current += line;
    current->push_back('\n');
  }
  for (const char* name : {"preamble", "example", "query", "instruction"}) {
    if (!sections.contains(name)) {
      throw Error(ErrorCode::TemplateError, std::string("missing template section [") + name + "]");
    }
  }
  return PromptTemplate(sections["preamble"], sections["example"], sections["query"],
                        sections["instruction"]);
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& dir, std::string_view id) {
  if (id.empty() || id.find('/') != std::string_view::npos || id.find("..") != std::string_view::npos) {
    throw Error(ErrorCode::TemplateError, "invalid template id '" + std::string(id) + "'");
  }
  const auto path = dir / (std::string(id) + ".tmpl");
  std::ifstream in(path);
  if (!in) {
    if (id == "default") return builtin();
    throw Error(ErrorCode::TemplateError, "template '" + std::string(id) + "' not found");
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::string PromptTemplate::serialize() const {
  return "[preamble]\n" + preamble_ + "\n\n[example]\n" + example_ + "\n\n[query]\n" + query_ +
         "\n\n[instruction]\n" + instruction_ + "\n";
}

PromptBundle assemble_prompt(const QueryInfo& query, std::span<const RetrievedExample> examples,
                             const PromptTemplate& tmpl) {
  if (examples.empty()) {
    throw Error(ErrorCode::EmptyContext, "cannot assemble a prompt without retrieved examples");
  }
  const std::string count = std::to_string(examples.size());
  const Values header{{"example_count", count}};

  std::string text = render(tmpl.preamble(), header);
  for (const auto& ex : examples) {
    const Values values{{"rank", std::to_string(ex.rank)},
                        {"similarity", format_similarity(ex.similarity)},
                        {"diagnosis", ex.cytology_diagnosis},
                        {"bethesda", std::string(to_string(ex.bethesda))},
                        {"interpretation", ex.interpretation}};
    text += "\n\n";
    text += render(tmpl.example_block(), values);
  }
  const Values query_values{{"case_id", query.case_id},
                            {"stain", query.stain},
                            {"magnification", std::to_string(query.magnification)},
                            {"example_count", count}};
  text += "\n\n";
  text += render(tmpl.query_section(), query_values);
  text += "\n\n";
  text += render(tmpl.instruction(), header);
  text += "\n";

  return {std::move(text), tmpl.hash(), examples.size(), query.case_id};
}

}  // namespace cytorag
