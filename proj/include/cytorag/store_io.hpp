#pragma once

#include <cstdint>
#include <filesystem>

#include "cytorag/store.hpp"

namespace cytorag {

/// Binary store layout, version 1. See docs/store_format.md.
inline constexpr char kStoreMagic[8] = {'C', 'Y', 'T', 'O', 'R', 'A', 'G', '\0'};
inline constexpr std::uint32_t kStoreFormatVersion = 1;

/// Writes to a sibling temp file and renames it over `path`.
void save_store(const StoreSnapshot& snapshot, const std::filesystem::path& path);

/// Throws IoError, VersionError (bad magic or newer format), FormatError
/// (truncated, checksum mismatch, invariant violation).
StoreSnapshot open_store(const std::filesystem::path& path);

}  // namespace cytorag
