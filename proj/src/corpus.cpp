#include "cytorag/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "cytorag/json_io.hpp"

namespace cytorag {

namespace {

template <class F>
void for_each_line(const std::filesystem::path& path, F&& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(number, line);
  }
  if (in.bad()) throw Error(ErrorCode::IoError, "read error on '" + path.string() + "'");
}

class RejectSink {
 public:
  RejectSink(bool strict, std::vector<LineReject>& out) : strict_(strict), out_(out) {}

  void add(const std::filesystem::path& file, std::size_t line, ErrorCode code,
           const std::string& message) {
    if (strict_) {
      throw Error(ErrorCode::FormatError, file.string() + ":" + std::to_string(line) + ": " +
                                              std::string(error_code_name(code)) + ": " + message);
    }
    out_.push_back({file.string(), line, code, message});
  }

 private:
  bool strict_;
  std::vector<LineReject>& out_;
};

Json parse_line(const std::string& line) {
  try {
    return Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::FormatError, std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

LoadResult load_corpus(Store& store, const std::filesystem::path& embeddings_path,
                       const std::filesystem::path& metadata_path, const LoadOptions& options) {
  LoadResult result;
  RejectSink rejects(options.strict, result.rejects);

  struct Pending {
    CaseRecord record;
    std::size_t line;
    std::size_t attached = 0;
  };
  std::map<std::string, Pending> pending;
  if (!metadata_path.empty()) {
    for_each_line(metadata_path, [&](std::size_t number, const std::string& text) {
      try {
        CaseRecord record = metadata_from_json(parse_line(text));
        if (pending.contains(record.case_id)) {
          throw Error(ErrorCode::InvalidMetadata,
                      "duplicate case_id '" + record.case_id + "' in metadata file");
        }
        std::string id = record.case_id;
        pending.emplace(std::move(id), Pending{std::move(record), number, 0});
      } catch (const Error& e) {
        rejects.add(metadata_path, number, e.code(), e.what());
      }
    });
  }

  struct PendingEmbedding {
    EmbeddingLine line;
    std::size_t number;
  };
  std::vector<PendingEmbedding> embeddings;
  if (!embeddings_path.empty()) {
    for_each_line(embeddings_path, [&](std::size_t number, const std::string& text) {
      try {
        embeddings.push_back({embedding_from_json(parse_line(text)), number});
      } catch (const Error& e) {
        rejects.add(embeddings_path, number, e.code(), e.what());
      }
    });
  }

  store.batch([&](StoreBuilder& builder) {
    for (auto& [id, p] : pending) {
      // Keep vectors of a case already in the store unless the file replaces them.
      if (const CaseRecord* existing = builder.find(id)) p.record.embeddings = existing->embeddings;
    }
    for (auto& [line, number] : embeddings) {
      try {
        const EncoderId& encoder = line.embedding.encoder;
        if (!builder.registry().contains(encoder)) {
          if (!options.auto_register) {
            throw Error(ErrorCode::UnknownEncoder, "encoder '" + encoder.str() + "' is not registered");
          }
          builder.register_encoder(encoder.str(), line.embedding.vector.size());
        }
        const auto dim = *builder.registry().dimension(encoder);
        if (line.embedding.vector.size() != dim) {
          throw Error(ErrorCode::DimensionMismatch,
                      "encoder '" + encoder.str() + "' expects " + std::to_string(dim) +
                          " components, got " + std::to_string(line.embedding.vector.size()));
        }
        validate_vector(line.embedding.vector);
        if (auto it = pending.find(line.case_id); it != pending.end()) {
          it->second.record.embeddings.insert_or_assign(encoder, line.embedding.vector);
          ++it->second.attached;
        } else {
          builder.attach_embedding(line.case_id, line.embedding);
        }
        ++result.embeddings_ingested;
      } catch (const Error& e) {
        rejects.add(embeddings_path, number, e.code(), e.what());
      }
    }
    for (auto& [id, p] : pending) {
      try {
        builder.upsert_case(std::move(p.record));
        ++result.cases_ingested;
      } catch (const Error& e) {
        result.embeddings_ingested -= p.attached;
        rejects.add(metadata_path, p.line, e.code(), e.what());
      }
    }
  });
  // Report in file order: metadata lines first, then embedding lines.
  std::stable_sort(result.rejects.begin(), result.rejects.end(),
                   [&](const LineReject& a, const LineReject& b) {
                     const bool am = a.file == metadata_path.string();
                     const bool bm = b.file == metadata_path.string();
                     if (am != bm) return am;
                     return a.line < b.line;
                   });
  return result;
}

}  // namespace cytorag
