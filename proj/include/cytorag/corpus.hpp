#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "cytorag/errors.hpp"
#include "cytorag/store.hpp"

namespace cytorag {

struct LineReject {
  std::string file;
  std::size_t line = 0;  // 1-based
  ErrorCode code = ErrorCode::FormatError;
  std::string message;
};

struct LoadOptions {
  /// Abort on the first bad line (FormatError) instead of collecting rejects.
  bool strict = false;
  /// Register unseen encoders from the "dim" field of their first line.
  bool auto_register = true;
};

struct LoadResult {
  std::size_t cases_ingested = 0;
  std::size_t embeddings_ingested = 0;
  std::vector<LineReject> rejects;
};

/// Ingests a metadata JSONL file plus an embeddings JSONL file in one store
/// commit. Either path may be empty to skip it. Embedding lines may target
/// cases from the metadata file or cases already in the store.
LoadResult load_corpus(Store& store, const std::filesystem::path& embeddings_path,
                       const std::filesystem::path& metadata_path,
                       const LoadOptions& options = {});

}  // namespace cytorag
