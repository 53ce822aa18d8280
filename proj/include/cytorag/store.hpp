#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cytorag/types.hpp"

namespace cytorag {

class EncoderRegistry {
 public:
  /// Throws DuplicateEncoder or InvalidDimension.
  void add(const EncoderId& id, std::size_t dim);

  std::optional<std::size_t> dimension(const EncoderId& id) const;
  bool contains(const EncoderId& id) const { return dims_.contains(id); }
  std::size_t size() const noexcept { return dims_.size(); }
  const std::map<EncoderId, std::size_t>& entries() const noexcept { return dims_; }

  bool operator==(const EncoderRegistry&) const = default;

 private:
  std::map<EncoderId, std::size_t> dims_;
};

/// Row-major packed vectors of every case that has an embedding under one
/// encoder. Rows follow case_id order; norms are precomputed in double.
struct EncoderMatrix {
  std::size_t dim = 0;
  std::vector<float> data;
  std::vector<double> norms;
  std::vector<std::uint32_t> case_index;

  std::size_t rows() const noexcept { return case_index.size(); }
  std::span<const float> row(std::size_t r) const {
    return {data.data() + r * dim, dim};
  }
};

/// Immutable point-in-time view of the store. Safe to share across threads.
class StoreSnapshot {
 public:
  StoreSnapshot() = default;
  StoreSnapshot(EncoderRegistry registry, std::vector<CaseRecord> cases, std::uint64_t version);

  const EncoderRegistry& registry() const noexcept { return registry_; }
  std::uint64_t version() const noexcept { return version_; }

  /// Sorted by case_id.
  const std::vector<CaseRecord>& cases() const noexcept { return cases_; }
  const CaseRecord* find(std::string_view case_id) const;
  std::optional<std::size_t> index_of(std::string_view case_id) const;

  /// nullptr when the encoder is not registered.
  const EncoderMatrix* matrix(const EncoderId& encoder) const;

  /// Compares registry, cases and version.
  bool operator==(const StoreSnapshot& other) const;

 private:
  EncoderRegistry registry_;
  std::vector<CaseRecord> cases_;
  std::uint64_t version_ = 0;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<EncoderId, EncoderMatrix> matrices_;
};

/// Throws NonFiniteVector or ZeroNormVector.
void validate_vector(std::span<const float> vector);

/// Working copy used by the single writer. Every mutation validates against
/// the registry; nothing is visible to readers until the owning Store commits.
class StoreBuilder {
 public:
  explicit StoreBuilder(const StoreSnapshot& base);
  StoreBuilder() = default;

  void register_encoder(std::string_view name, std::size_t dim);
  std::string upsert_case(CaseRecord record);
  void attach_embedding(std::string_view case_id, const Embedding& embedding);

  const EncoderRegistry& registry() const noexcept { return registry_; }
  const CaseRecord* find(std::string_view case_id) const;
  bool dirty() const noexcept { return dirty_; }

  StoreSnapshot build(std::uint64_t version) const;

 private:
  void validate_embedding(const EncoderId& encoder, std::span<const float> vector) const;

  EncoderRegistry registry_;
  std::map<std::string, CaseRecord, std::less<>> cases_;
  bool dirty_ = false;
};

/// Single logical writer publishing immutable snapshots. Readers grab the
/// current snapshot pointer and never wait on a writer building the next one.
class Store {
 public:
  Store();
  explicit Store(StoreSnapshot initial);

  std::shared_ptr<const StoreSnapshot> snapshot() const;
  std::uint64_t version() const { return snapshot()->version(); }

  void register_encoder(std::string_view name, std::size_t dim);
  std::string upsert_case(CaseRecord record);
  void attach_embedding(std::string_view case_id, const Embedding& embedding);

  /// Runs `mutate` against a builder and publishes one new snapshot if it
  /// returns normally and changed something. On exception nothing changes.
  void batch(const std::function<void(StoreBuilder&)>& mutate);

  /// Replaces the whole contents (used by reload).
  void reset(StoreSnapshot snapshot);

 private:
  void publish(std::shared_ptr<const StoreSnapshot> next);

  std::mutex write_mutex_;
  std::shared_ptr<const StoreSnapshot> current_;
};

}  // namespace cytorag
